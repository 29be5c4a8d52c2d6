//! Experiment orchestration: replicas, error metric, studies and export.

mod config;
mod experiment;
mod export;

pub use config::{preset, triple_well_interval_sets, ExperimentConfig, KernelFamily, ParameterSweep, TimeGrid, PRESET_NAMES};
pub use experiment::{
    build_basis, compute_error, curve_shape, interval_study, magnetization_difference, magnetization_difference_for,
    prepare_replica, replica_seed, run_experiment, scaling_study, sweep_measurement_time, sweep_reservoir_parameter,
    CurveShape, ErrorCell, ErrorReport, ReplicaData, ReplicaFailure, ReplicaRecord, ScalingRow,
};
pub use export::*;
