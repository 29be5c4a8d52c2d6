use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::basis::DEFAULT_H_BASIS;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::ks::ScfSettings;
use crate::models::{FeatureRange, FermionProblem, ProblemKind};
use crate::reservoir::{scaled_times, side_from_vnn, square_geometry, ReservoirConfig};
use crate::svr::HyperparameterGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Linear,
    Rbf,
    Pqk,
}

impl KernelFamily {
    pub fn label(self) -> &'static str {
        match self {
            KernelFamily::Linear => "linear",
            KernelFamily::Rbf => "rbf",
            KernelFamily::Pqk => "pqk",
        }
    }

    /// Classical kernels do not see the reservoir or the measurement time.
    pub fn is_time_dependent(self) -> bool {
        self == KernelFamily::Pqk
    }
}

/// Measurement times, either absolute (μs) or as `t·Ω_max / π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeGrid {
    /// `count` points with `t·Ω_max/π` uniform in `[lo, hi]`.
    ScaledPi { lo: f64, hi: f64, count: usize },
    Absolute { times: Vec<f64> },
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::ScaledPi { lo: 0.05, hi: 2.0, count: 48 }
    }
}

impl TimeGrid {
    pub fn resolve(&self, reservoir: &ReservoirConfig) -> Result<Vec<f64>> {
        let times = match self {
            TimeGrid::ScaledPi { lo, hi, count } => {
                if *count == 0 || !(lo.is_finite() && hi.is_finite()) || (*count > 1 && hi <= lo) {
                    return Err(Error::invalid("scaled time grid needs count ≥ 1 and lo < hi"));
                }
                scaled_times(reservoir, lo * PI, hi * PI, *count)
            }
            TimeGrid::Absolute { times } => times.clone(),
        };
        if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::invalid("measurement times must be finite and nonnegative"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("measurement times must be strictly increasing"));
        }
        Ok(times)
    }
}

/// A reservoir parameter scanned by `sweep-time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", content = "values", rename_all = "snake_case")]
pub enum ParameterSweep {
    Vnn(Vec<f64>),
    OmegaGlob(Vec<f64>),
    DeltaLoc(Vec<f64>),
}

impl ParameterSweep {
    pub fn name(&self) -> &'static str {
        match self {
            ParameterSweep::Vnn(_) => "vnn",
            ParameterSweep::OmegaGlob(_) => "omega_glob",
            ParameterSweep::DeltaLoc(_) => "delta_loc",
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            ParameterSweep::Vnn(v) | ParameterSweep::OmegaGlob(v) | ParameterSweep::DeltaLoc(v) => v,
        }
    }

    /// `base` with the swept parameter set to `value`.
    pub fn apply(&self, base: &ReservoirConfig, value: f64) -> ReservoirConfig {
        let mut out = base.clone();
        match self {
            ParameterSweep::Vnn(_) => out.positions = square_geometry(side_from_vnn(value, base.c6)),
            ParameterSweep::OmegaGlob(_) => out.omega_glob = value,
            ParameterSweep::DeltaLoc(_) => out.delta_loc = value,
        }
        out
    }
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: FermionProblem,
    /// Grid size; `None` uses the problem default.
    #[serde(default)]
    pub num_points: Option<usize>,
    #[serde(default)]
    pub scf: ScfSettings,
    /// `(N_L, N_C, N_R)`.
    pub basis_sizes: [usize; 3],
    #[serde(default = "default_h_basis")]
    pub h_basis: f64,
    pub reservoir: ReservoirConfig,
    pub kernels: Vec<KernelFamily>,
    #[serde(default)]
    pub hyperparameters: HyperparameterGrid,
    pub n_train: usize,
    pub n_hidden: usize,
    pub num_replicas: usize,
    #[serde(default)]
    pub times: TimeGrid,
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<ParameterSweep>,
    #[serde(default)]
    pub train_sizes: Vec<usize>,
    #[serde(default)]
    pub interval_sets: Vec<Vec<FeatureRange>>,
    /// Interaction strengths for the magnetisation diagnostic.
    #[serde(default)]
    pub diagnostic_vnn: Vec<f64>,
}

fn default_h_basis() -> f64 {
    DEFAULT_H_BASIS
}

impl ExperimentConfig {
    /// H₂ with the reservoir at `Ω=5, Δ_glob=0, Δ_loc=−3.5, V_NN=4, v_homo=0.5`.
    pub fn h2_default() -> Self {
        Self {
            problem: FermionProblem::h2(),
            num_points: None,
            scf: ScfSettings::default(),
            basis_sizes: [10, 10, 10],
            h_basis: DEFAULT_H_BASIS,
            reservoir: ReservoirConfig::h2(4.0, 5.0, 0.0, -3.5, 0.5),
            kernels: vec![KernelFamily::Linear, KernelFamily::Rbf, KernelFamily::Pqk],
            hyperparameters: HyperparameterGrid::default(),
            n_train: 20,
            n_hidden: 20,
            num_replicas: 20,
            times: TimeGrid::default(),
            seed: 0,
            sweep: None,
            train_sizes: Vec::new(),
            interval_sets: Vec::new(),
            diagnostic_vnn: Vec::new(),
        }
    }

    /// Triple well with the reservoir at `Ω=5, Δ_glob=5, Δ_loc=−1, V_NN=0.5`.
    pub fn triple_well_default() -> Self {
        Self {
            problem: FermionProblem::triple_well(),
            basis_sizes: [6, 6, 6],
            reservoir: ReservoirConfig::triple_well(0.5, 5.0, 5.0, -1.0),
            ..Self::h2_default()
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_train + self.n_hidden
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        let default = self.problem.default_grid();
        match self.num_points {
            None => Ok(default),
            Some(n) => SpatialGrid::new(self.problem.length, n, self.problem.boundary),
        }
    }

    pub fn measurement_times(&self) -> Result<Vec<f64>> {
        self.times.resolve(&self.reservoir)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.grid()?;
        self.scf.validate()?;
        self.reservoir.validate()?;
        self.hyperparameters.validate()?;
        if self.kernels.is_empty() {
            return Err(Error::invalid("at least one kernel family is required"));
        }
        if self.n_train < self.hyperparameters.folds || self.n_hidden == 0 || self.num_replicas == 0 {
            return Err(Error::invalid(format!(
                "need N_train ≥ {} folds, N_hidden ≥ 1 and at least one replica",
                self.hyperparameters.folds
            )));
        }
        if self.basis_sizes.iter().sum::<usize>() == 0 || !(self.h_basis > 0.0) {
            return Err(Error::invalid("basis needs at least one function and h_basis > 0"));
        }
        if self.reservoir.addressed_sites.len() != self.problem.num_features() {
            return Err(Error::invalid(format!(
                "reservoir addresses {} sites but the problem has {} features",
                self.reservoir.addressed_sites.len(),
                self.problem.num_features()
            )));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values().is_empty() {
                return Err(Error::invalid("parameter sweep has no values"));
            }
            for &v in sweep.values() {
                sweep.apply(&self.reservoir, v).validate()?;
            }
        }
        if self.train_sizes.iter().any(|&n| n < self.hyperparameters.folds) {
            return Err(Error::invalid("every training size must cover the CV folds"));
        }
        for set in &self.interval_sets {
            if self.problem.kind() != ProblemKind::TripleWell {
                return Err(Error::invalid("feature-interval sets apply to the triple well only"));
            }
            let mut p = self.problem.clone();
            p.feature_ranges = set.clone();
            p.validate()?;
        }
        self.measurement_times()?;
        Ok(())
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 9] = [
    "fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b", "fig4c", "fig5", "fig6",
];

/// Built-in experiment configurations keyed by figure panel.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let h2 = ExperimentConfig::h2_default();
    let tw = ExperimentConfig::triple_well_default();
    let cfg = match name {
        "fig2a" => ExperimentConfig { sweep: Some(ParameterSweep::Vnn(vec![1.0, 2.0, 4.0, 8.0])), ..h2 },
        "fig2b" => ExperimentConfig { diagnostic_vnn: vec![1.0, 2.0, 4.0, 8.0], ..h2 },
        "fig3a" => ExperimentConfig { sweep: Some(ParameterSweep::OmegaGlob(vec![2.5, 5.0, 7.5, 10.0])), ..h2 },
        "fig3b" => ExperimentConfig { sweep: Some(ParameterSweep::DeltaLoc(vec![-0.5, -1.5, -2.5, -3.5])), ..h2 },
        "fig4a" => ExperimentConfig { sweep: Some(ParameterSweep::Vnn(vec![0.5, 1.0, 2.0, 4.0, 8.0])), ..tw },
        "fig4b" => ExperimentConfig { sweep: Some(ParameterSweep::OmegaGlob(vec![2.5, 5.0, 7.5, 10.0])), ..tw },
        "fig4c" => ExperimentConfig { sweep: Some(ParameterSweep::DeltaLoc(vec![-0.5, -1.0, -2.0, -3.0])), ..tw },
        "fig5" => {
            let mut reservoir = ReservoirConfig::triple_well(1.0, 5.0, 5.0, -1.1);
            reservoir.positions = square_geometry(10.0);
            ExperimentConfig {
                reservoir,
                times: TimeGrid::Absolute { times: vec![0.6] },
                train_sizes: vec![10, 20, 40],
                ..tw
            }
        }
        "fig6" => ExperimentConfig {
            reservoir: ReservoirConfig::triple_well(1.0, 7.5, 5.0, -1.1),
            interval_sets: triple_well_interval_sets(),
            ..tw
        },
        other => {
            return Err(Error::invalid(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// Three nested feature boxes around the default triple-well ranges,
/// narrowest first; the middle one is the default.
pub fn triple_well_interval_sets() -> Vec<Vec<FeatureRange>> {
    [0.5, 1.0, 1.5]
        .iter()
        .map(|s| {
            let (hc, hw) = (1.2, 0.4 * s);
            let (wc, ww) = (0.35, 0.15 * s);
            vec![
                FeatureRange { lo: hc - hw, hi: hc + hw },
                FeatureRange { lo: hc - hw, hi: hc + hw },
                FeatureRange { lo: wc - ww, hi: wc + ww },
                FeatureRange { lo: wc - ww, hi: wc + ww },
            ]
        })
        .collect()
}
