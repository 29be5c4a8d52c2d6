use pqkdens::basis::ExpansionBasis;
use pqkdens::ks::{solve_ks, ScfSettings};
use pqkdens::models::{generate_samples, FermionProblem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn h2_basis() -> &'static ExpansionBasis {
    static B: OnceLock<ExpansionBasis> = OnceLock::new();
    B.get_or_init(|| {
        let p = FermionProblem::h2();
        ExpansionBasis::build(&p, &p.default_grid(), 10, 10, 10, 20.0).unwrap()
    })
}

fn triple_well_basis() -> &'static ExpansionBasis {
    static B: OnceLock<ExpansionBasis> = OnceLock::new();
    B.get_or_init(|| {
        let p = FermionProblem::triple_well();
        ExpansionBasis::build(&p, &p.default_grid(), 6, 6, 6, 20.0).unwrap()
    })
}

#[test]
fn default_bases_are_orthonormal() {
    assert_eq!(h2_basis().len(), 30);
    assert_eq!(triple_well_basis().len(), 18);
    assert!(h2_basis().orthonormality_error() < 1e-10);
    assert!(triple_well_basis().orthonormality_error() < 1e-10);
}

#[test]
fn ks_density_is_well_approximated() {
    let p = FermionProblem::h2();
    let grid = p.default_grid();
    let b = h2_basis();
    for s in generate_samples(&p, &grid, 3, 1).unwrap() {
        let v = p.ks_potential(&s.raw_features, &grid).unwrap();
        let n = solve_ks(&grid, &v, p.mass(), &ScfSettings::default()).unwrap().density.values;
        let approx = b.reconstruct(&b.project(0, &n).unwrap().u).unwrap();
        let gap = grid.l1_distance(&n, &approx);
        // two particles: a few percent of the total mass
        assert!(gap < 0.1, "L1 gap {gap}");
    }
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent_on_the_span(seed in any::<u64>()) {
        let b = triple_well_basis();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_vec(&mut rng, b.len());
        let f = b.reconstruct(&u).unwrap();
        let back = b.project(0, &f).unwrap().u;
        for (x, y) in u.iter().zip(&back) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        let again = b.reconstruct(&back).unwrap();
        for (x, y) in f.iter().zip(&again) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn bessel_inequality(seed in any::<u64>()) {
        let b = h2_basis();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: Vec<f64> = (0..b.grid.num_points()).map(|_| rng.random_range(0.0..1.0)).collect();
        let u = b.project(0, &n).unwrap().u;
        let captured: f64 = u.iter().map(|c| c * c).sum();
        let direct = b.grid.inner(&n, &n);
        prop_assert!(captured <= direct * (1.0 + 1e-12));
    }

    #[test]
    fn reconstruction_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let b = h2_basis();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, w) = (random_vec(&mut rng, b.len()), random_vec(&mut rng, b.len()));
        let mix: Vec<f64> = u.iter().zip(&w).map(|(x, y)| a * x + c * y).collect();
        let lhs = b.reconstruct(&mix).unwrap();
        let (ru, rw) = (b.reconstruct(&u).unwrap(), b.reconstruct(&w).unwrap());
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * ru[i] + c * rw[i])).abs() < 1e-12);
        }
    }
}
