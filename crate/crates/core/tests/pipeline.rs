use std::path::Path;
use std::process::Command;

use pqkdens::models::FeatureRange;
use pqkdens::pipeline::{
    export_report, interval_study, magnetization_difference, run_experiment, scaling_study, write_json,
    ExperimentConfig, KernelFamily, TimeGrid,
};
use pqkdens::svr::{GammaSpec, HyperparameterGrid};

fn tiny(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.n_train = 8;
    cfg.n_hidden = 4;
    cfg.num_replicas = 2;
    cfg.basis_sizes = [2, 2, 2];
    cfg.times = TimeGrid::ScaledPi { lo: 0.5, hi: 1.5, count: 3 };
    cfg.hyperparameters = HyperparameterGrid {
        c_values: vec![1.0, 100.0],
        epsilon_values: vec![0.001, 0.01],
        gammas: vec![GammaSpec::Fixed(1.0), GammaSpec::InverseFeatureCount],
        folds: 2,
        ..Default::default()
    };
    cfg
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn error_table_layout_and_aggregates() {
    let cfg = tiny(ExperimentConfig::h2_default());
    let report = run_experiment(&cfg).unwrap();
    assert!(report.failures.is_empty());
    let dir = tempfile::tempdir().unwrap();
    export_report(&report, &cfg, dir.path()).unwrap();
    let text = read(&dir.path().join("error_curves.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "kernel,t*,mean,std,r0,r1");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // one row per measurement time plus one per classical baseline
    assert_eq!(rows.len(), report.times.len() + 2);
    let mut last_t = f64::NEG_INFINITY;
    for row in &rows {
        let vals: Vec<f64> = row[4..].iter().map(|v| v.parse().unwrap()).collect();
        assert!(vals.iter().all(|e| *e >= 0.0));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((row[2].parse::<f64>().unwrap() - mean).abs() <= 1e-15 * mean.max(1.0));
        assert!((row[3].parse::<f64>().unwrap() - std).abs() <= 1e-15 * mean.max(1.0));
        if row[0] == "pqk" {
            let t: f64 = row[1].parse().unwrap();
            assert!(t > last_t);
            last_t = t;
        } else {
            assert_eq!(row[1], "");
        }
    }
    // classical kernels do not depend on the measurement time
    let lin = report.curve(KernelFamily::Linear);
    assert!(lin.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn classical_baselines_ignore_the_reservoir() {
    let cfg = tiny(ExperimentConfig::h2_default());
    let mut other = cfg.clone();
    other.reservoir.omega_glob = 9.0;
    other.kernels = vec![KernelFamily::Linear, KernelFamily::Rbf];
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&other).unwrap();
    for k in [KernelFamily::Linear, KernelFamily::Rbf] {
        assert_eq!(a.cell(k, None).unwrap().replicas, b.cell(k, None).unwrap().replicas);
    }
}

#[test]
fn exports_are_reproducible_from_the_manifest() {
    let cfg = tiny(ExperimentConfig::h2_default());
    let first = tempfile::tempdir().unwrap();
    export_report(&run_experiment(&cfg).unwrap(), &cfg, first.path()).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&read(&first.path().join("manifest.json"))).unwrap();
    let again: ExperimentConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(again, cfg);
    let second = tempfile::tempdir().unwrap();
    export_report(&run_experiment(&again).unwrap(), &again, second.path()).unwrap();
    for entry in walk(first.path()) {
        let rel = entry.strip_prefix(first.path()).unwrap();
        assert_eq!(std::fs::read(&entry).unwrap(), std::fs::read(second.path().join(rel)).unwrap(), "{rel:?}");
    }
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn single_training_size_matches_the_plain_run() {
    let cfg = tiny(ExperimentConfig::h2_default());
    let rows = scaling_study(&cfg, &[cfg.n_train]).unwrap();
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), report.cells.len());
    for (row, cell) in rows.iter().zip(&report.cells) {
        assert_eq!((row.kernel, row.time), (cell.kernel, cell.time));
        assert_eq!(row.replicas, cell.replicas);
    }
}

#[test]
fn identical_interval_sets_give_identical_curves() {
    let mut cfg = tiny(ExperimentConfig::triple_well_default());
    cfg.num_replicas = 1;
    let set = vec![
        FeatureRange::new(0.9, 1.5).unwrap(),
        FeatureRange::new(0.9, 1.5).unwrap(),
        FeatureRange::new(0.25, 0.45).unwrap(),
        FeatureRange::new(0.25, 0.45).unwrap(),
    ];
    let reports = interval_study(&cfg, &[set.clone(), set]).unwrap();
    assert_eq!(reports[0].cells, reports[1].cells);
    assert!(interval_study(&tiny(ExperimentConfig::h2_default()), &[]).is_err());
}

#[test]
fn magnetisation_gap_is_bounded() {
    let cfg = ExperimentConfig::h2_default();
    let series = magnetization_difference(&cfg, &[1.0, 0.0]).unwrap();
    assert!(series.iter().all(|(_, d)| *d >= 0.0 && *d <= 2.0));
}

fn cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_pqkdens"))
        .args(args)
        .env("RUST_LOG", "error")
        .status()
        .unwrap()
        .code()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let good = dir.path().join("good.json");
    let mut cfg = tiny(ExperimentConfig::h2_default());
    cfg.num_replicas = 1;
    write_json(&good, &cfg).unwrap();
    assert_eq!(cli(&["generate-data", "--config", good.to_str().unwrap(), "--out", out]), 0);
    assert!(Path::new(out).join("problem.json").exists());

    let missing = dir.path().join("missing.json");
    assert_eq!(cli(&["train", "--config", missing.to_str().unwrap(), "--out", out]), 2);
    assert_eq!(cli(&["train", "--preset", "no-such-figure", "--out", out]), 2);
    assert_eq!(cli(&["train", "--preset", "fig2a", "--config", good.to_str().unwrap(), "--out", out]), 2);

    let bad = dir.path().join("bad.json");
    let mut broken = cfg.clone();
    broken.n_train = 0;
    write_json(&bad, &broken).unwrap();
    assert_eq!(cli(&["train", "--config", bad.to_str().unwrap(), "--out", out]), 2);
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(cli(&["train", "--config", bad.to_str().unwrap(), "--out", out]), 2);

    let stalled = dir.path().join("stalled.json");
    let mut slow = cfg.clone();
    slow.scf.max_iterations = 1;
    write_json(&stalled, &slow).unwrap();
    assert_eq!(cli(&["generate-data", "--config", stalled.to_str().unwrap(), "--out", out]), 3);

    // a manifest from an earlier run is accepted as a config
    let report_dir = dir.path().join("report");
    assert_eq!(cli(&["report", "--config", good.to_str().unwrap(), "--out", report_dir.to_str().unwrap()]), 0);
    let manifest = report_dir.join("manifest.json");
    let rerun = dir.path().join("rerun");
    assert_eq!(cli(&["report", "--config", manifest.to_str().unwrap(), "--out", rerun.to_str().unwrap()]), 0);
    assert_eq!(read(&report_dir.join("error_curves.csv")), read(&rerun.join("error_curves.csv")));
}
