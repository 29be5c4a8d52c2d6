use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pqkdens::pipeline::{
    self, build_basis, curve_shape, export_report, interval_study, magnetization_difference_for, manifest,
    prepare_replica, preset, replica_seed, run_experiment, scaling_study, sweep_measurement_time,
    sweep_reservoir_parameter, triple_well_interval_sets, write_basis, write_coefficients_csv,
    write_densities_csv, write_densities_meta, write_error_curves_csv, write_json, write_magnetization_csv,
    write_measurements_csv, write_models_json, write_problem_json, write_reservoir_json, write_samples_csv,
    write_scaling_csv, ErrorReport, ExperimentConfig, KernelFamily, ParameterSweep,
};
use pqkdens::models::generate_samples;
use pqkdens::reservoir::embed_samples;
use pqkdens::{Error, Result};

#[derive(Parser)]
#[command(name = "pqkdens", version, about = "Learn 1D fermionic densities with reservoir-projected kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the configuration's.
    #[arg(long)]
    seed: Option<u64>,
    /// Built-in configuration (fig2a, fig2b, fig3a, fig3b, fig4a, fig4b, fig4c, fig5, fig6).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples and solve the KS equations for every replica.
    GenerateData(Common),
    /// Build the orthonormal expansion basis.
    BuildBasis(Common),
    /// Reservoir measurements for every replica's samples.
    Embed(Common),
    /// Train the regressors and write models and coefficients.
    Train(Common),
    /// Error against measurement time, optionally for each swept reservoir parameter.
    SweepTime(Common),
    /// Error against training-set size.
    Scaling(Common),
    /// Error curves for several feature-interval sets.
    Intervals(Common),
    /// |M1 − M3| against time for the extreme H₂ sample.
    DiagnoseMagnetization(Common),
    /// Full experiment with every artifact.
    Report(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(_), Some(_)) => return Err(Error::InvalidArgument("pass either --config or --preset, not both".into())),
        (Some(path), None) => {
            let value: serde_json::Value = pipeline::read_json(path).map_err(|e| match e {
                Error::Io { .. } => Error::InvalidArgument(e.to_string()),
                e => e,
            })?;
            // a manifest written by an earlier run carries its config
            let value = match value.get("config") {
                Some(inner) if value.get("replica_seeds").is_some() => inner.clone(),
                _ => value,
            };
            serde_json::from_value(value)?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => ExperimentConfig::h2_default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn replica_name(r: usize) -> String {
    format!("replica_{r:03}")
}

fn generate_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid()?;
    let basis = build_basis(cfg, &grid)?;
    write_problem_json(&out.join("problem.json"), &cfg.problem)?;
    for r in 0..cfg.num_replicas {
        let seed = replica_seed(cfg.seed, r);
        let data = prepare_replica(cfg, &grid, &basis, seed)?;
        let name = replica_name(r);
        write_samples_csv(&out.join("samples").join(format!("{name}.csv")), &data.samples)?;
        let densities: Vec<Vec<f64>> = data.solutions.iter().map(|s| s.density.values.clone()).collect();
        write_densities_csv(&out.join("densities").join(format!("{name}.csv")), &densities)?;
        write_densities_meta(
            &out.join("densities").join(format!("{name}.json")),
            &grid,
            &cfg.scf,
            seed,
            &data.solutions.iter().map(|s| s.iterations).collect::<Vec<_>>(),
            &data.solutions.iter().map(|s| s.residual).collect::<Vec<_>>(),
        )?;
        write_coefficients_csv(&out.join("coefficients").join(format!("{name}.csv")), &data.coefficients)?;
    }
    Ok(())
}

fn embed(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid()?;
    let times = cfg.measurement_times()?;
    write_reservoir_json(&out.join("reservoir.json"), &cfg.reservoir)?;
    for r in 0..cfg.num_replicas {
        let samples = generate_samples(&cfg.problem, &grid, cfg.n_samples(), replica_seed(cfg.seed, r))?;
        let features: Vec<Vec<f64>> = samples.iter().map(|s| s.rescaled_features.clone()).collect();
        let table = embed_samples(&cfg.reservoir, &features, &times)?;
        let name = replica_name(r);
        write_samples_csv(&out.join("samples").join(format!("{name}.csv")), &samples)?;
        write_measurements_csv(&out.join("measurements").join(format!("{name}.csv")), &table, cfg.reservoir.num_qubits())?;
    }
    Ok(())
}

fn train(cfg: &ExperimentConfig, out: &Path) -> Result<ErrorReport> {
    let report = run_experiment(cfg)?;
    for rec in &report.records {
        let name = replica_name(rec.replica);
        write_coefficients_csv(&out.join("coefficients").join(format!("{name}.csv")), &rec.coefficients)?;
        for (label, models) in &rec.models {
            write_models_json(&out.join("models").join(format!("{name}_{label}.json")), models)?;
        }
    }
    write_json(&out.join("manifest.json"), &manifest(cfg, Some(&report)))?;
    Ok(report)
}

fn sweep_time(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ErrorReport>> {
    match &cfg.sweep {
        None => {
            let report = sweep_measurement_time(cfg)?;
            write_error_curves_csv(&out.join("error_curves.csv"), &report)?;
            write_json(&out.join("manifest.json"), &manifest(cfg, Some(&report)))?;
            Ok(vec![report])
        }
        Some(sweep) => {
            let reports = sweep_reservoir_parameter(cfg)?;
            let mut index = Vec::new();
            for (i, (value, report)) in reports.iter().enumerate() {
                let file = format!("error_curves_{}_{i}.csv", sweep.name());
                write_error_curves_csv(&out.join(&file), report)?;
                index.push(json!({ "value": value, "file": file, "omega_max": report.omega_max }));
            }
            let mut m = manifest(cfg, None);
            m["sweep"] = json!({ "parameter": sweep.name(), "curves": index });
            write_json(&out.join("manifest.json"), &m)?;
            Ok(reports.into_iter().map(|(_, r)| r).collect())
        }
    }
}

fn intervals(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ErrorReport>> {
    let sets = if cfg.interval_sets.is_empty() { triple_well_interval_sets() } else { cfg.interval_sets.clone() };
    let reports = interval_study(cfg, &sets)?;
    let mut summary = Vec::new();
    for (i, (set, report)) in sets.iter().zip(&reports).enumerate() {
        let file = format!("error_curves_interval_{i}.csv");
        write_error_curves_csv(&out.join(&file), report)?;
        let shape = curve_shape(&report.curve(KernelFamily::Pqk)).ok();
        summary.push(json!({ "ranges": set, "file": file, "pqk_shape": shape }));
    }
    let mut m = manifest(cfg, None);
    m["intervals"] = json!(summary);
    write_json(&out.join("manifest.json"), &m)?;
    Ok(reports)
}

fn diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let times = cfg.measurement_times()?;
    let values = if cfg.diagnostic_vnn.is_empty() { vec![cfg.reservoir.vnn()] } else { cfg.diagnostic_vnn.clone() };
    let sweep = ParameterSweep::Vnn(values.clone());
    let mut files = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let reservoir = sweep.apply(&cfg.reservoir, v);
        let series = magnetization_difference_for(&reservoir, &times, &[1.0, 0.0])?;
        let file = format!("magnetization_vnn_{i}.csv");
        write_magnetization_csv(&out.join(&file), reservoir.omega_max(), &series)?;
        files.push(json!({ "vnn": v, "file": file }));
    }
    let mut m = manifest(cfg, None);
    m["magnetization"] = json!(files);
    write_json(&out.join("manifest.json"), &m)
}

fn run(cli: Cli) -> Result<bool> {
    let (common, cmd) = match &cli.command {
        Command::GenerateData(c) => (c, "generate-data"),
        Command::BuildBasis(c) => (c, "build-basis"),
        Command::Embed(c) => (c, "embed"),
        Command::Train(c) => (c, "train"),
        Command::SweepTime(c) => (c, "sweep-time"),
        Command::Scaling(c) => (c, "scaling"),
        Command::Intervals(c) => (c, "intervals"),
        Command::DiagnoseMagnetization(c) => (c, "diagnose-magnetization"),
        Command::Report(c) => (c, "report"),
    };
    let cfg = load_config(common)?;
    let out = common.out.as_path();
    pipeline::ensure_dir(out)?;
    log::info!("{cmd}: writing to {}", out.display());
    let failed = |reports: &[ErrorReport]| reports.iter().any(ErrorReport::has_convergence_failure);
    let converged = match cli.command {
        Command::GenerateData(_) => generate_data(&cfg, out).map(|_| true)?,
        Command::BuildBasis(_) => {
            let grid = cfg.grid()?;
            let basis = build_basis(&cfg, &grid)?;
            write_basis(&out.join("basis.csv"), &out.join("basis.json"), &basis)?;
            true
        }
        Command::Embed(_) => embed(&cfg, out).map(|_| true)?,
        Command::Train(_) => !failed(&[train(&cfg, out)?]),
        Command::SweepTime(_) => !failed(&sweep_time(&cfg, out)?),
        Command::Scaling(_) => {
            let sizes = if cfg.train_sizes.is_empty() { vec![cfg.n_train] } else { cfg.train_sizes.clone() };
            let rows = scaling_study(&cfg, &sizes)?;
            write_scaling_csv(&out.join("scaling.csv"), &rows)?;
            write_json(&out.join("manifest.json"), &manifest(&cfg, None))?;
            rows.iter().all(|r| r.mean.is_finite())
        }
        Command::Intervals(_) => !failed(&intervals(&cfg, out)?),
        Command::DiagnoseMagnetization(_) => diagnose(&cfg, out).map(|_| true)?,
        Command::Report(_) => {
            let report = run_experiment(&cfg)?;
            export_report(&report, &cfg, out)?;
            !report.has_convergence_failure()
        }
    };
    Ok(converged)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("some replicas failed to converge");
            ExitCode::from(3)
        }
        Err(e) => {
            log::error!("{e}");
            match e {
                Error::InvalidArgument(_) | Error::Json(_) => ExitCode::from(2),
                e if e.is_convergence_failure() => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
