use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, KernelFamily, ParameterSweep};
use crate::basis::{CoefficientVector, ExpansionBasis};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::ks::{solve_ks_sample, KsSolution};
use crate::models::{child_seed, generate_samples, PotentialSample};
use crate::reservoir::{
    build_reservoir_hamiltonian, embed_samples, measure, MeasurementTable, Propagator, ReservoirConfig,
};
use crate::svr::{gram_linear, gram_pqk, gram_rbf, resolve_gammas, train_multi, GramMatrix, SvrModel};

/// `(1/N) Σ_k ∫ |n_k^pred − n_k^ref| dx` with both densities reconstructed on `basis`.
pub fn compute_error(predicted: &[Vec<f64>], reference: &[Vec<f64>], basis: &ExpansionBasis) -> Result<f64> {
    if predicted.len() != reference.len() || predicted.is_empty() {
        return Err(Error::invalid(format!(
            "{} predicted rows vs {} reference rows",
            predicted.len(),
            reference.len()
        )));
    }
    let mut total = 0.0;
    for (p, r) in predicted.iter().zip(reference) {
        let np = basis.reconstruct(p)?;
        let nr = basis.reconstruct(r)?;
        total += basis.grid.l1_distance(&np, &nr);
    }
    Ok(total / predicted.len() as f64)
}

/// One row of the error table: a kernel at one measurement time (`None` for
/// classical kernels) with every replica's error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCell {
    pub kernel: KernelFamily,
    pub time: Option<f64>,
    /// `None` marks a replica that failed.
    pub replicas: Vec<Option<f64>>,
}

impl ErrorCell {
    fn finite(&self) -> impl Iterator<Item = f64> + '_ {
        self.replicas.iter().flatten().copied()
    }

    pub fn count(&self) -> usize {
        self.finite().count()
    }

    /// Mean over successful replicas; NaN if none succeeded.
    pub fn mean(&self) -> f64 {
        let n = self.count();
        if n == 0 {
            return f64::NAN;
        }
        self.finite().sum::<f64>() / n as f64
    }

    /// Population standard deviation over successful replicas (0 for one replica).
    pub fn std(&self) -> f64 {
        let n = self.count();
        if n == 0 {
            return f64::NAN;
        }
        let m = self.mean();
        (self.finite().map(|e| (e - m).powi(2)).sum::<f64>() / n as f64).sqrt()
    }
}

/// Artifacts of one replica, kept for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub seed: u64,
    pub samples: Vec<PotentialSample>,
    pub densities: Vec<Vec<f64>>,
    pub scf_iterations: Vec<usize>,
    pub scf_residuals: Vec<f64>,
    pub coefficients: Vec<CoefficientVector>,
    pub measurements: MeasurementTable,
    /// Per kernel label: the trained regressors (PQK at its best time).
    pub models: Vec<(String, Vec<SvrModel>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaFailure {
    pub replica: usize,
    pub message: String,
    pub convergence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    pub omega_max: f64,
    pub num_replicas: usize,
    pub cells: Vec<ErrorCell>,
    pub failures: Vec<ReplicaFailure>,
    #[serde(skip)]
    pub records: Vec<ReplicaRecord>,
}

impl ErrorReport {
    pub fn cell(&self, kernel: KernelFamily, time: Option<f64>) -> Option<&ErrorCell> {
        self.cells.iter().find(|c| c.kernel == kernel && c.time == time)
    }

    /// Mean error of `kernel` at time index `i` (classical kernels ignore `i`).
    pub fn mean_at(&self, kernel: KernelFamily, i: usize) -> Option<f64> {
        let time = kernel.is_time_dependent().then(|| self.times[i]);
        self.cell(kernel, time).map(ErrorCell::mean)
    }

    /// Mean-error curve of `kernel` over the time grid.
    pub fn curve(&self, kernel: KernelFamily) -> Vec<f64> {
        (0..self.times.len()).map(|i| self.mean_at(kernel, i).unwrap_or(f64::NAN)).collect()
    }

    pub fn scaled_times(&self) -> Vec<f64> {
        self.times.iter().map(|t| t * self.omega_max).collect()
    }

    /// Average of `kernel`'s mean curve over points with `t·Ω_max ∈ [lo, hi]`.
    pub fn window_mean(&self, kernel: KernelFamily, lo: f64, hi: f64) -> Option<f64> {
        let tol = 1e-9 * hi.abs().max(1.0);
        let vals: Vec<f64> = self
            .scaled_times()
            .iter()
            .zip(self.curve(kernel))
            .filter(|(s, _)| **s >= lo - tol && **s <= hi + tol)
            .map(|(_, e)| e)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn has_convergence_failure(&self) -> bool {
        self.failures.iter().any(|f| f.convergence)
    }
}

/// Shape descriptors of an error-vs-time curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveShape {
    /// First index whose value is at or below the midpoint between the
    /// initial value and the minimum.
    pub drop_index: usize,
    /// Mean of the curve from `drop_index` onward.
    pub plateau: f64,
    pub minimum: f64,
}

pub fn curve_shape(curve: &[f64]) -> Result<CurveShape> {
    if curve.is_empty() || curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("curve must be non-empty and finite"));
    }
    let minimum = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let half = 0.5 * (curve[0] + minimum);
    let drop_index = curve.iter().position(|&v| v <= half).expect("minimum satisfies the bound");
    let tail = &curve[drop_index..];
    Ok(CurveShape { drop_index, plateau: tail.iter().sum::<f64>() / tail.len() as f64, minimum })
}

/// Shared data for one replica: samples, densities and coefficients.
pub struct ReplicaData {
    pub seed: u64,
    pub samples: Vec<PotentialSample>,
    pub solutions: Vec<KsSolution>,
    pub coefficients: Vec<CoefficientVector>,
}

pub fn replica_seed(master: u64, replica: usize) -> u64 {
    child_seed(master, replica as u64)
}

fn cv_seed(replica_seed: u64) -> u64 {
    child_seed(replica_seed, u64::MAX)
}

/// Draws, solves and projects the samples of one replica.
pub fn prepare_replica(
    config: &ExperimentConfig,
    grid: &SpatialGrid,
    basis: &ExpansionBasis,
    seed: u64,
) -> Result<ReplicaData> {
    let samples = generate_samples(&config.problem, grid, config.n_samples(), seed)?;
    let solutions: Vec<KsSolution> = samples
        .par_iter()
        .map(|s| solve_ks_sample(grid, s, &config.problem, &config.scf))
        .collect::<Result<_>>()?;
    let coefficients = solutions
        .iter()
        .enumerate()
        .map(|(i, s)| basis.project(i, &s.density.values))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicaData { seed, samples, solutions, coefficients })
}

pub fn build_basis(config: &ExperimentConfig, grid: &SpatialGrid) -> Result<ExpansionBasis> {
    let [nl, nc, nr] = config.basis_sizes;
    ExpansionBasis::build(&config.problem, grid, nl, nc, nr, config.h_basis)
}

struct KernelOutcome {
    error: f64,
    models: Vec<SvrModel>,
}

/// Grid search, fit and hidden-set error for one family of Gram matrices.
fn fit_and_score(
    config: &ExperimentConfig,
    basis: &ExpansionBasis,
    data: &ReplicaData,
    grams: &[GramMatrix],
) -> Result<KernelOutcome> {
    let n_train = config.n_train;
    let train: Vec<usize> = (0..n_train).collect();
    let hidden: Vec<usize> = (n_train..config.n_samples()).collect();
    let targets: Vec<Vec<f64>> = data.coefficients[..n_train].iter().map(|c| c.u.clone()).collect();
    let reference: Vec<Vec<f64>> = data.coefficients[n_train..].iter().map(|c| c.u.clone()).collect();
    let hidden_sel = (config.hyperparameters.selection == crate::svr::Selection::Hidden)
        .then_some((hidden.as_slice(), reference.as_slice()));
    let models = train_multi(grams, &train, &targets, hidden_sel, &config.hyperparameters, cv_seed(data.seed))?;

    let mut predicted = vec![vec![0.0; models.len()]; hidden.len()];
    for (l, model) in models.iter().enumerate() {
        let gram = grams.iter().find(|g| g.kind == model.kernel).expect("model kernel is a candidate");
        let cross = gram.block(&hidden, &train);
        for (r, row) in predicted.iter_mut().enumerate() {
            let k: Vec<f64> = cross.row(r).iter().copied().collect();
            row[l] = model.predict(&k)?;
        }
    }
    Ok(KernelOutcome { error: compute_error(&predicted, &reference, basis)?, models })
}

/// Errors of every configured kernel on one replica: classical kernels give
/// one value, PQK one value per time.
struct ReplicaErrors {
    classical: Vec<(KernelFamily, f64)>,
    pqk: Vec<f64>,
    record: ReplicaRecord,
}

fn run_replica(
    config: &ExperimentConfig,
    grid: &SpatialGrid,
    basis: &ExpansionBasis,
    times: &[f64],
    replica: usize,
    data: Option<ReplicaData>,
) -> Result<ReplicaErrors> {
    let seed = replica_seed(config.seed, replica);
    let data = match data {
        Some(d) => d,
        None => prepare_replica(config, grid, basis, seed)?,
    };
    let features: Vec<Vec<f64>> = data.samples.iter().map(|s| s.rescaled_features.clone()).collect();
    let train_features = &features[..config.n_train];

    let mut classical = Vec::new();
    let mut models = Vec::new();
    for &family in &config.kernels {
        let grams = match family {
            KernelFamily::Linear => vec![gram_linear(&features)?],
            KernelFamily::Rbf => resolve_gammas(&config.hyperparameters.gammas, train_features)?
                .into_iter()
                .map(|g| gram_rbf(&features, g))
                .collect::<Result<Vec<_>>>()?,
            KernelFamily::Pqk => continue,
        };
        let outcome = fit_and_score(config, basis, &data, &grams)?;
        classical.push((family, outcome.error));
        models.push((family.label().to_string(), outcome.models));
    }

    let mut measurements = MeasurementTable::default();
    let mut pqk = Vec::new();
    if config.kernels.contains(&KernelFamily::Pqk) {
        measurements = embed_samples(&config.reservoir, &features, times)?;
        let outcomes: Vec<KernelOutcome> = times
            .par_iter()
            .map(|&t| {
                let rows = measurements.at_time(t);
                fit_and_score(config, basis, &data, &[gram_pqk(&rows)?])
            })
            .collect::<Result<_>>()?;
        pqk = outcomes.iter().map(|o| o.error).collect();
        let best = pqk
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty time grid");
        let best_models = outcomes.into_iter().nth(best).expect("index in range").models;
        models.push((KernelFamily::Pqk.label().to_string(), best_models));
    }

    let record = ReplicaRecord {
        replica,
        seed,
        densities: data.solutions.iter().map(|s| s.density.values.clone()).collect(),
        scf_iterations: data.solutions.iter().map(|s| s.iterations).collect(),
        scf_residuals: data.solutions.iter().map(|s| s.residual).collect(),
        samples: data.samples,
        coefficients: data.coefficients,
        measurements,
        models,
    };
    Ok(ReplicaErrors { classical, pqk, record })
}

/// Runs every replica and aggregates the errors per (kernel, time).
///
/// A failing replica is logged and recorded; its cells are left empty.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ErrorReport> {
    run_with_data(config, None)
}

fn run_with_data(config: &ExperimentConfig, shared: Option<&[ReplicaData]>) -> Result<ErrorReport> {
    config.validate()?;
    let grid = config.grid()?;
    let basis = build_basis(config, &grid)?;
    let times = config.measurement_times()?;

    let results: Vec<Result<ReplicaErrors>> = (0..config.num_replicas)
        .into_par_iter()
        .map(|r| {
            let data = shared.map(|s| ReplicaData {
                seed: s[r].seed,
                samples: s[r].samples.clone(),
                solutions: s[r].solutions.clone(),
                coefficients: s[r].coefficients.clone(),
            });
            run_replica(config, &grid, &basis, &times, r, data)
        })
        .collect();

    let mut cells: Vec<ErrorCell> = Vec::new();
    for &family in &config.kernels {
        if family.is_time_dependent() {
            for &t in &times {
                cells.push(ErrorCell { kernel: family, time: Some(t), replicas: vec![None; config.num_replicas] });
            }
        } else {
            cells.push(ErrorCell { kernel: family, time: None, replicas: vec![None; config.num_replicas] });
        }
    }
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(out) => {
                for (family, e) in out.classical {
                    let cell = cells.iter_mut().find(|c| c.kernel == family).expect("cell exists");
                    cell.replicas[r] = Some(e);
                }
                for (i, e) in out.pqk.into_iter().enumerate() {
                    let cell = cells
                        .iter_mut()
                        .find(|c| c.kernel == KernelFamily::Pqk && c.time == Some(times[i]))
                        .expect("cell exists");
                    cell.replicas[r] = Some(e);
                }
                records.push(out.record);
            }
            Err(e) => {
                log::error!("replica {r} aborted: {e}");
                failures.push(ReplicaFailure { replica: r, message: e.to_string(), convergence: e.is_convergence_failure() });
            }
        }
    }
    Ok(ErrorReport {
        times,
        omega_max: config.reservoir.omega_max(),
        num_replicas: config.num_replicas,
        cells,
        failures,
        records,
    })
}

/// PQK error over the time grid with the classical kernels as references.
pub fn sweep_measurement_time(config: &ExperimentConfig) -> Result<ErrorReport> {
    if !config.kernels.contains(&KernelFamily::Pqk) {
        return Err(Error::invalid("a measurement-time sweep needs the PQK kernel"));
    }
    run_experiment(config)
}

/// One report per value of the configured reservoir sweep. Densities are
/// shared across the variants since they do not depend on the reservoir.
pub fn sweep_reservoir_parameter(config: &ExperimentConfig) -> Result<Vec<(f64, ErrorReport)>> {
    let sweep: &ParameterSweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::invalid("configuration has no parameter sweep"))?;
    config.validate()?;
    let grid = config.grid()?;
    let basis = build_basis(config, &grid)?;
    let shared: Vec<ReplicaData> = (0..config.num_replicas)
        .map(|r| prepare_replica(config, &grid, &basis, replica_seed(config.seed, r)))
        .collect::<Result<_>>()?;
    sweep
        .values()
        .iter()
        .map(|&v| {
            let variant = ExperimentConfig { reservoir: sweep.apply(&config.reservoir, v), sweep: None, ..config.clone() };
            Ok((v, run_with_data(&variant, Some(&shared))?))
        })
        .collect()
}

/// `|M^z_1 − M^z_3|` over the configured time grid for the addressed features `v_extreme`.
pub fn magnetization_difference(config: &ExperimentConfig, v_extreme: &[f64]) -> Result<Vec<(f64, f64)>> {
    magnetization_difference_for(&config.reservoir, &config.measurement_times()?, v_extreme)
}

pub fn magnetization_difference_for(
    reservoir: &ReservoirConfig,
    times: &[f64],
    v_extreme: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if reservoir.addressed_sites != [0, 2] {
        return Err(Error::invalid("the magnetisation diagnostic needs features on sites 0 and 2"));
    }
    let prop = Propagator::new(build_reservoir_hamiltonian(reservoir, v_extreme)?);
    times
        .iter()
        .map(|&t| {
            let m = measure(&prop.evolve(t)?, t)?;
            Ok((t, (m.values[1] - m.values[3]).abs()))
        })
        .collect()
}

/// One row of the training-size study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_train: usize,
    pub kernel: KernelFamily,
    pub time: Option<f64>,
    pub mean: f64,
    pub std: f64,
    pub replicas: Vec<Option<f64>>,
}

pub fn scaling_study(config: &ExperimentConfig, train_sizes: &[usize]) -> Result<Vec<ScalingRow>> {
    if train_sizes.is_empty() {
        return Err(Error::invalid("scaling study needs at least one training size"));
    }
    let mut rows = Vec::new();
    for &n in train_sizes {
        let cfg = ExperimentConfig { n_train: n, ..config.clone() };
        let report = run_experiment(&cfg)?;
        for cell in &report.cells {
            rows.push(ScalingRow {
                n_train: n,
                kernel: cell.kernel,
                time: cell.time,
                mean: cell.mean(),
                std: cell.std(),
                replicas: cell.replicas.clone(),
            });
        }
    }
    Ok(rows)
}

/// Time sweeps with the triple-well features drawn from each interval set.
pub fn interval_study(
    config: &ExperimentConfig,
    interval_sets: &[Vec<crate::models::FeatureRange>],
) -> Result<Vec<ErrorReport>> {
    if config.problem.kind() != crate::models::ProblemKind::TripleWell {
        return Err(Error::invalid("interval study applies to the triple well only"));
    }
    interval_sets
        .iter()
        .map(|set| {
            let mut cfg = config.clone();
            cfg.problem.feature_ranges = set.clone();
            sweep_measurement_time(&cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FermionProblem;

    #[test]
    fn cell_statistics() {
        let c = ErrorCell { kernel: KernelFamily::Linear, time: None, replicas: vec![Some(1.0), None, Some(3.0)] };
        assert_eq!(c.count(), 2);
        assert_eq!(c.mean(), 2.0);
        assert_eq!(c.std(), 1.0);
        let one = ErrorCell { kernel: KernelFamily::Linear, time: None, replicas: vec![Some(0.5)] };
        assert_eq!(one.std(), 0.0);
    }

    #[test]
    fn curve_shape_finds_drop() {
        let s = curve_shape(&[1.0, 0.98, 0.5, 0.2, 0.1, 0.12]).unwrap();
        assert_eq!(s.drop_index, 2);
        assert!((s.plateau - 0.23).abs() < 1e-12);
        assert_eq!(s.minimum, 0.1);
    }

    #[test]
    fn error_of_unit_bump_is_l1_norm_of_basis_function() {
        let p = FermionProblem::h2();
        let grid = p.default_grid();
        let basis = ExpansionBasis::build(&p, &grid, 3, 3, 3, 20.0).unwrap();
        let reference = vec![vec![0.1; 9]];
        let mut bumped = reference.clone();
        bumped[0][0] += 1.0;
        let expected = grid.integrate(&basis.functions[0].iter().map(|v| v.abs()).collect::<Vec<_>>());
        let e = compute_error(&bumped, &reference, &basis).unwrap();
        assert!((e - expected).abs() < 1e-12);
        assert_eq!(compute_error(&reference, &reference, &basis).unwrap(), 0.0);
        assert!(compute_error(&reference, &[], &basis).is_err());
    }

    #[test]
    fn magnetisation_vanishes_at_zero_time_and_without_interaction() {
        let mut r = ReservoirConfig::h2(4.0, 5.0, 0.0, -3.5, 0.5);
        let d = magnetization_difference_for(&r, &[0.0, 0.3, 0.7], &[1.0, 0.0]).unwrap();
        assert_eq!(d[0].1, 0.0);
        assert!(d[2].1 > 1e-6);
        r.c6 = 0.0;
        let d = magnetization_difference_for(&r, &[0.3, 0.7, 1.1], &[1.0, 0.0]).unwrap();
        assert!(d.iter().all(|(_, v)| *v < 1e-12));
        let tw = ReservoirConfig::triple_well(1.0, 5.0, 5.0, -1.0);
        assert!(magnetization_difference_for(&tw, &[0.1], &[1.0, 0.0, 0.0, 0.0]).is_err());
    }
}
