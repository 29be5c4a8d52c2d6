//! CSV and JSON artifacts. Numbers are written with 17 significant digits
//! and nothing time-dependent is recorded, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::experiment::{ErrorReport, ReplicaRecord, ScalingRow};
use crate::basis::{CoefficientVector, ExpansionBasis};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::ks::ScfSettings;
use crate::models::{FermionProblem, PotentialSample};
use crate::reservoir::{observable_names, MeasurementTable, ReservoirConfig};
use crate::svr::SvrModel;

/// Full-precision scientific notation (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(serde_json::from_str(&text)?)
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// `sample_id, raw0.., v0..`.
pub fn write_samples_csv(path: &Path, samples: &[PotentialSample]) -> Result<()> {
    let nf = samples.first().map_or(0, |s| s.raw_features.len());
    let mut header = vec!["sample_id".to_string()];
    header.extend(numbered("raw", nf));
    header.extend(numbered("v", nf));
    write_rows(
        path,
        &header,
        samples.iter().map(|s| {
            let mut row = vec![s.sample_id.to_string()];
            row.extend(s.raw_features.iter().map(|v| fmt_f64(*v)));
            row.extend(s.rescaled_features.iter().map(|v| fmt_f64(*v)));
            row
        }),
    )
}

/// Rows are samples, columns grid nodes.
pub fn write_densities_csv(path: &Path, densities: &[Vec<f64>]) -> Result<()> {
    let n = densities.first().map_or(0, Vec::len);
    let mut header = vec!["sample_id".to_string()];
    header.extend(numbered("n", n));
    write_rows(
        path,
        &header,
        densities.iter().enumerate().map(|(i, d)| {
            let mut row = vec![i.to_string()];
            row.extend(d.iter().map(|v| fmt_f64(*v)));
            row
        }),
    )
}

/// Sidecar describing how a densities file was produced.
pub fn write_densities_meta(
    path: &Path,
    grid: &SpatialGrid,
    scf: &ScfSettings,
    seed: u64,
    iterations: &[usize],
    residuals: &[f64],
) -> Result<()> {
    write_json(
        path,
        &json!({
            "grid": grid,
            "scf": scf,
            "seed": seed,
            "iterations": iterations,
            "residuals": residuals,
        }),
    )
}

/// One row per basis function.
pub fn write_basis(csv_path: &Path, meta_path: &Path, basis: &ExpansionBasis) -> Result<()> {
    let header = numbered("x", basis.grid.num_points());
    write_rows(csv_path, &header, basis.functions.iter().map(|f| f.iter().map(|v| fmt_f64(*v)).collect()))?;
    write_json(
        meta_path,
        &json!({
            "n_left": basis.n_left,
            "n_center": basis.n_center,
            "n_right": basis.n_right,
            "n_trunc": basis.len(),
            "h_basis": basis.h_basis,
            "grid": basis.grid,
            "orthonormality_error": basis.orthonormality_error(),
        }),
    )
}

pub fn write_coefficients_csv(path: &Path, coefficients: &[CoefficientVector]) -> Result<()> {
    let n = coefficients.first().map_or(0, |c| c.u.len());
    let mut header = vec!["sample_id".to_string()];
    header.extend(numbered("u", n));
    write_rows(
        path,
        &header,
        coefficients.iter().map(|c| {
            let mut row = vec![c.sample_id.to_string()];
            row.extend(c.u.iter().map(|v| fmt_f64(*v)));
            row
        }),
    )
}

/// `sample_id, t*, mz0.., czz01..`.
pub fn write_measurements_csv(path: &Path, table: &MeasurementTable, num_qubits: usize) -> Result<()> {
    let mut header = vec!["sample_id".to_string(), "t*".to_string()];
    header.extend(observable_names(num_qubits));
    write_rows(
        path,
        &header,
        table.rows.iter().map(|r| {
            let mut row = vec![r.sample_id.to_string(), fmt_f64(r.time)];
            row.extend(r.values.iter().map(|v| fmt_f64(*v)));
            row
        }),
    )
}

pub fn write_problem_json(path: &Path, problem: &FermionProblem) -> Result<()> {
    write_json(path, problem)
}

pub fn write_reservoir_json(path: &Path, reservoir: &ReservoirConfig) -> Result<()> {
    write_json(
        path,
        &json!({
            "config": reservoir,
            "vnn": reservoir.vnn(),
            "omega_max": reservoir.omega_max(),
        }),
    )
}

pub fn write_models_json(path: &Path, models: &[SvrModel]) -> Result<()> {
    write_json(path, models)
}

/// `kernel, t*, mean, std, r0..`; classical kernels leave `t*` empty.
pub fn write_error_curves_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let mut header: Vec<String> = ["kernel", "t*", "mean", "std"].iter().map(|s| s.to_string()).collect();
    header.extend(numbered("r", report.num_replicas));
    write_rows(
        path,
        &header,
        report.cells.iter().map(|c| {
            let mut row = vec![c.kernel.label().to_string(), fmt_opt(c.time), fmt_f64(c.mean()), fmt_f64(c.std())];
            row.extend(c.replicas.iter().map(|e| fmt_opt(*e)));
            row
        }),
    )
}

/// `n_train, kernel, t*, mean, std, r0..`.
pub fn write_scaling_csv(path: &Path, rows: &[ScalingRow]) -> Result<()> {
    let nr = rows.first().map_or(0, |r| r.replicas.len());
    let mut header: Vec<String> = ["n_train", "kernel", "t*", "mean", "std"].iter().map(|s| s.to_string()).collect();
    header.extend(numbered("r", nr));
    write_rows(
        path,
        &header,
        rows.iter().map(|r| {
            let mut row = vec![
                r.n_train.to_string(),
                r.kernel.label().to_string(),
                fmt_opt(r.time),
                fmt_f64(r.mean),
                fmt_f64(r.std),
            ];
            row.extend(r.replicas.iter().map(|e| fmt_opt(*e)));
            row
        }),
    )
}

/// `t*, t*Omega_max, abs_mz1_minus_mz3`.
pub fn write_magnetization_csv(path: &Path, omega_max: f64, series: &[(f64, f64)]) -> Result<()> {
    let header: Vec<String> = ["t*", "t*Omega_max", "abs_mz1_minus_mz3"].iter().map(|s| s.to_string()).collect();
    write_rows(
        path,
        &header,
        series.iter().map(|(t, d)| vec![fmt_f64(*t), fmt_f64(t * omega_max), fmt_f64(*d)]),
    )
}

fn write_record(dir: &Path, record: &ReplicaRecord, num_qubits: usize) -> Result<()> {
    let name = format!("replica_{:03}", record.replica);
    write_densities_csv(&dir.join("densities").join(format!("{name}.csv")), &record.densities)?;
    write_coefficients_csv(&dir.join("coefficients").join(format!("{name}.csv")), &record.coefficients)?;
    if !record.measurements.rows.is_empty() {
        write_measurements_csv(&dir.join("measurements").join(format!("{name}.csv")), &record.measurements, num_qubits)?;
    }
    for (label, models) in &record.models {
        write_models_json(&dir.join("models").join(format!("{name}_{label}.json")), models)?;
    }
    Ok(())
}

/// Manifest contents: enough to rerun the experiment.
pub fn manifest(config: &ExperimentConfig, report: Option<&ErrorReport>) -> serde_json::Value {
    let seeds: Vec<u64> = (0..config.num_replicas)
        .map(|r| super::experiment::replica_seed(config.seed, r))
        .collect();
    json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "omega_max": config.reservoir.omega_max(),
        "vnn": config.reservoir.vnn(),
        "replica_seeds": seeds,
        "times": report.map(|r| r.times.clone()),
        "failures": report.map(|r| r.failures.clone()),
    })
}

/// Writes the error curves, per-replica artifacts and `manifest.json`.
/// A report without cells produces the manifest only.
pub fn export_report(report: &ErrorReport, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    if !report.cells.is_empty() {
        let p = dir.join("error_curves.csv");
        write_error_curves_csv(&p, report)?;
        written.push(p);
        for record in &report.records {
            write_record(dir, record, config.reservoir.num_qubits())?;
        }
    }
    let p = dir.join("manifest.json");
    write_json(&p, &manifest(config, Some(report)))?;
    written.push(p);
    Ok(written)
}
