mod common;

use nalgebra::DMatrix;
use pqkdens::reservoir::{embed_samples, ReservoirConfig};
use pqkdens::svr::{
    cross_kernel, gram_linear, gram_pqk, gram_rbf, grid_search, train_multi, train_svr, train_svr_with, GammaSpec,
    HyperparameterGrid, KernelKind, SolverOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> (DMatrix<f64>, Vec<f64>, Vec<Vec<f64>>, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(6..=10);
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let y: Vec<f64> = x.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[1] + 0.05 * rng.random::<f64>()).collect();
    let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    let eps = [0.001, 0.01, 0.1][rng.random_range(0..3)];
    let k = gram_rbf(&x, 2.0).unwrap().entries;
    (k, y, x, c, eps)
}

#[test]
fn smo_matches_dense_qp() {
    for seed in 0..25 {
        let (k, y, _, c, eps) = instance(seed);
        let model = train_svr(&k, &y, c, eps).unwrap();
        let (delta, bias, dual) = common::qp_oracle(&k, &y, c, eps);
        assert!((model.dual_objective - dual).abs() < 1e-6, "seed {seed}: {} vs {dual}", model.dual_objective);
        for i in 0..y.len() {
            let row: Vec<f64> = k.row(i).iter().copied().collect();
            let oracle: f64 = delta.iter().zip(&row).map(|(d, k)| d * k).sum::<f64>() + bias;
            let p = model.predict(&row).unwrap();
            assert!((p - oracle).abs() < 1e-5, "seed {seed} row {i}: {p} vs {oracle}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_is_feasible_and_gap_small(seed in 0u64..10_000) {
        let (k, y, _, c, eps) = instance(seed);
        let opts = SolverOptions::default();
        let m = train_svr_with(&k, &y, c, eps, &opts).unwrap();
        let sum: f64 = m.dual.iter().sum();
        prop_assert!(sum.abs() < 1e-10 * c.max(1.0) * y.len() as f64);
        prop_assert!(m.dual.iter().all(|d| d.abs() <= c * (1.0 + 1e-12)));
        prop_assert!(m.duality_gap >= -1e-9);
        prop_assert!(m.duality_gap < 1e-6 * (1.0 + m.dual_objective.abs()));
    }

    #[test]
    fn support_vectors_lie_on_or_outside_the_tube(seed in 0u64..10_000) {
        let (k, y, _, c, eps) = instance(seed);
        let m = train_svr(&k, &y, c, eps).unwrap();
        for i in 0..y.len() {
            let row: Vec<f64> = k.row(i).iter().copied().collect();
            let r = (y[i] - m.predict(&row).unwrap()).abs();
            if m.dual[i] == 0.0 {
                prop_assert!(r <= eps + 2e-3);
            } else {
                prop_assert!(r >= eps - 2e-3);
            }
        }
    }
}

#[test]
fn rbf_tends_to_identity_for_large_gamma() {
    let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1, (i as f64).sin()]).collect();
    let g = gram_rbf(&x, 1e6).unwrap().entries;
    for i in 0..6 {
        for j in 0..6 {
            if i == j {
                assert_eq!(g[(i, j)], 1.0);
            } else {
                assert!(g[(i, j)] < 1e-10);
            }
        }
    }
}

#[test]
fn pqk_gram_is_linear_kernel_on_measurements() {
    let cfg = ReservoirConfig::h2(4.0, 5.0, 0.0, -3.5, 0.5);
    let samples: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0, 1.0 - i as f64 / 5.0]).collect();
    let table = embed_samples(&cfg, &samples, &[0.0, 0.4]).unwrap();
    let at0 = table.at_time(0.0);
    assert!(gram_pqk(&at0).unwrap().entries.iter().all(|v| *v == 10.0));
    let rows = table.at_time(0.4);
    let pqk = gram_pqk(&rows).unwrap();
    let lin = gram_linear(&rows.iter().map(|r| r.values.clone()).collect::<Vec<_>>()).unwrap();
    assert!((pqk.entries - lin.entries).abs().max() < 1e-12);
    assert_eq!(pqk.kind, KernelKind::Pqk { time: 0.4 });
}

fn linear_problem(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let y = x.iter().map(|r| 0.7 * r[0] - 0.3 * r[1] + 0.2).collect();
    (x, y)
}

fn small_grid() -> HyperparameterGrid {
    HyperparameterGrid {
        c_values: vec![0.1, 10.0, 1000.0],
        epsilon_values: vec![0.001, 0.01],
        gammas: vec![GammaSpec::Fixed(1.0)],
        folds: 5,
        ..Default::default()
    }
}

#[test]
fn exactly_linear_data_is_fit_within_the_smallest_tube() {
    let (x, y) = linear_problem(40);
    let grams = [gram_linear(&x).unwrap()];
    let train: Vec<usize> = (0..40).collect();
    let grid = small_grid();
    let best = grid_search(&grams, &train, &y, None, &grid, 5).unwrap();
    assert!(grid.c_values.contains(&best.c) && grid.epsilon_values.contains(&best.epsilon));
    assert!(best.score <= 0.001 + 1e-6, "CV error {}", best.score);
}

#[test]
fn single_target_reduces_to_one_fit() {
    let (x, y) = linear_problem(20);
    let grams = [gram_linear(&x).unwrap()];
    let train: Vec<usize> = (0..20).collect();
    let grid = small_grid();
    let targets: Vec<Vec<f64>> = y.iter().map(|v| vec![*v]).collect();
    let models = train_multi(&grams, &train, &targets, None, &grid, 5).unwrap();
    assert_eq!(models.len(), 1);
    let best = grid_search(&grams, &train, &y, None, &grid, 5).unwrap();
    let direct = train_svr_with(&grams[0].entries, &y, best.c, best.epsilon, &grid.solver).unwrap();
    assert_eq!(models[0].dual, direct.dual);
    assert_eq!(models[0].bias, direct.bias);
}

#[test]
fn per_coefficient_models_are_independent() {
    let (x, y) = linear_problem(20);
    let grams = [gram_linear(&x).unwrap(), gram_rbf(&x, 2.0).unwrap()];
    let train: Vec<usize> = (0..20).collect();
    let grid = small_grid();
    let other: Vec<f64> = x.iter().map(|r| (4.0 * r[1]).cos()).collect();
    let ab: Vec<Vec<f64>> = y.iter().zip(&other).map(|(a, b)| vec![*a, *b]).collect();
    let ba: Vec<Vec<f64>> = y.iter().zip(&other).map(|(a, b)| vec![*b, *a]).collect();
    let m_ab = train_multi(&grams, &train, &ab, None, &grid, 1).unwrap();
    let m_ba = train_multi(&grams, &train, &ba, None, &grid, 1).unwrap();
    assert_eq!(m_ab.len(), 2);
    assert_eq!(m_ab[0].dual, m_ba[1].dual);
    assert_eq!(m_ab[1].dual, m_ba[0].dual);
    assert_eq!(m_ab[0].kernel, m_ba[1].kernel);
    let hidden: Vec<Vec<f64>> = (0..3).map(|i| vec![0.1 * i as f64, 0.5]).collect();
    let cross = cross_kernel(m_ab[0].kernel, &hidden, &x);
    for r in 0..3 {
        let row: Vec<f64> = cross.row(r).iter().copied().collect();
        assert!(m_ab[0].predict(&row).unwrap().is_finite());
    }
}
