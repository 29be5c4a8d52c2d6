//! Kohn-Sham ground-state densities for two fermions on a 1D grid.
//!
//! The effective potential is `V + V_H[n] + V_xc[n]` with a softened-Coulomb
//! Hartree term and a 1D LDA exchange-correlation potential. The two
//! fermions occupy the two lowest orbitals and the loop is accelerated with
//! Pulay mixing over the last `memory_mu` iterates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Boundary, SpatialGrid};
use crate::models::{FermionProblem, PotentialSample};

/// Number of occupied orbitals.
pub const PARTICLES: usize = 2;

/// Discretised `T + V` acting on the active grid nodes.
///
/// Under OBC the wavefunction is pinned to zero on the two endpoint nodes,
/// so `matrix` covers the interior nodes `1..n-1`; under PBC it covers all
/// nodes with a cyclic stencil.
#[derive(Debug, Clone)]
pub struct SingleParticleOperator {
    pub matrix: DMatrix<f64>,
    pub mass: f64,
    /// Grid index of the first active node.
    pub offset: usize,
    pub num_points: usize,
}

pub fn build_single_particle_hamiltonian(
    grid: &SpatialGrid,
    potential: &[f64],
    mass: f64,
) -> Result<SingleParticleOperator> {
    if !(mass > 0.0) {
        return Err(Error::invalid(format!("mass must be positive, got {mass}")));
    }
    grid.check_len("potential", potential.len())?;
    let n = grid.num_points();
    let h = grid.spacing();
    let t = 1.0 / (2.0 * mass * h * h);
    let (offset, dim) = match grid.boundary() {
        Boundary::Obc => (1, n - 2),
        Boundary::Pbc => (0, n),
    };
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = 2.0 * t + potential[i + offset];
        if i + 1 < dim {
            m[(i, i + 1)] = -t;
            m[(i + 1, i)] = -t;
        }
    }
    if grid.boundary() == Boundary::Pbc {
        m[(0, dim - 1)] = -t;
        m[(dim - 1, 0)] = -t;
    }
    Ok(SingleParticleOperator { matrix: m, mass, offset, num_points: n })
}

/// Lowest eigenpairs of a single-particle operator.
#[derive(Debug, Clone)]
pub struct Eigenstates {
    pub energies: Vec<f64>,
    /// Orbitals normalised under the grid quadrature, sign fixed so the
    /// largest-magnitude entry is positive.
    pub orbitals: Vec<Vec<f64>>,
}

impl SingleParticleOperator {
    pub fn lowest_states(&self, grid: &SpatialGrid, count: usize) -> Result<Eigenstates> {
        let n = self.matrix.nrows();
        if count > n {
            return Err(Error::invalid(format!("requested {count} states from a {n}-dim operator")));
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut energies = Vec::with_capacity(count);
        let mut orbitals = Vec::with_capacity(count);
        for &k in order.iter().take(count) {
            energies.push(eig.eigenvalues[k]);
            let mut v = vec![0.0; self.num_points];
            v[self.offset..self.offset + n].copy_from_slice(eig.eigenvectors.column(k).as_slice());
            let norm = grid.inner(&v, &v).sqrt();
            fix_sign(&mut v);
            v.iter_mut().for_each(|x| *x /= norm);
            orbitals.push(v);
        }
        Ok(Eigenstates { energies, orbitals })
    }
}

/// Flips `v` so its largest-magnitude component is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Grid density normalised to a particle number under the grid quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub values: Vec<f64>,
    pub particle_number: f64,
}

impl DensityProfile {
    /// Sum of squared orbitals.
    pub fn from_orbitals(orbitals: &[Vec<f64>]) -> Self {
        let n = orbitals.first().map_or(0, Vec::len);
        let mut values = vec![0.0; n];
        for phi in orbitals {
            for (d, p) in values.iter_mut().zip(phi) {
                *d += p * p;
            }
        }
        Self { values, particle_number: orbitals.len() as f64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HartreeMetric {
    /// Plain `|x − x'|` on the real line.
    #[default]
    Line,
    /// Minimum-image distance on the ring of circumference `length`.
    Ring,
}

/// `V_H(x) = ∫ n(x') / (|x − x'| + 1) dx'`.
pub fn hartree_potential(density: &[f64], grid: &SpatialGrid, metric: HartreeMetric) -> Vec<f64> {
    let x = grid.nodes();
    let w = grid.weights();
    let len = grid.length();
    let wn: Vec<f64> = w.iter().zip(density).map(|(a, b)| a * b).collect();
    x.iter()
        .map(|&xi| {
            x.iter()
                .zip(&wn)
                .map(|(&xj, &q)| {
                    let mut r = (xi - xj).abs();
                    if metric == HartreeMetric::Ring {
                        r = r.min(len - r);
                    }
                    q / (r + 1.0)
                })
                .sum()
        })
        .collect()
}

/// 1D LDA: `V_xc(n) = (−1.19 + 1.77 n − 1.37 n²) n^0.604`.
pub fn xc_value(n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        (-1.19 + 1.77 * n - 1.37 * n * n) * n.powf(0.604)
    }
}

pub fn xc_potential_lda(density: &[f64]) -> Result<Vec<f64>> {
    density
        .iter()
        .map(|&n| {
            if n < 0.0 || !n.is_finite() {
                Err(Error::invalid(format!("density value {n} is negative or not finite")))
            } else {
                Ok(xc_value(n))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScfSettings {
    pub mixing_alpha: f64,
    pub memory_mu: usize,
    /// Convergence threshold on `∫|n⁽ˢ⁺¹⁾ − n⁽ˢ⁾| dx`.
    pub scf_tolerance: f64,
    pub max_iterations: usize,
    #[serde(default)]
    pub hartree_metric: HartreeMetric,
    /// Switches the Hartree and xc terms off (non-interacting reference).
    #[serde(default = "default_true")]
    pub interacting: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ScfSettings {
    fn default() -> Self {
        Self {
            mixing_alpha: 0.3,
            memory_mu: 5,
            scf_tolerance: 1e-6,
            max_iterations: 500,
            hartree_metric: HartreeMetric::Line,
            interacting: true,
        }
    }
}

impl ScfSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.mixing_alpha > 0.0 && self.mixing_alpha <= 1.0) {
            return Err(Error::invalid("mixing_alpha must lie in (0, 1]"));
        }
        if self.memory_mu < 1 {
            return Err(Error::invalid("memory_mu must be at least 1"));
        }
        if !(self.scf_tolerance > 0.0) {
            return Err(Error::invalid("scf_tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PulayStep {
    pub density: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// Set when the Gram system was singular and plain linear mixing was used.
    pub fallback: bool,
}

/// Pulay (DIIS) mixing of input densities `n⁽ᵐ⁾` with their KS outputs.
///
/// Residuals are `R⁽ᵐ⁾ = n⁽ᵐ⁾ᴷˢ − n⁽ᵐ⁾`; the coefficients minimise
/// `‖Σ c_m R⁽ᵐ⁾‖²` subject to `Σ c_m = 1`, and the next density is
/// `Σ c_m (n⁽ᵐ⁾ + α R⁽ᵐ⁾)`. Histories are ordered oldest first.
pub fn pulay_mix(
    densities: &[Vec<f64>],
    ks_densities: &[Vec<f64>],
    grid: &SpatialGrid,
    alpha: f64,
) -> Result<PulayStep> {
    if densities.is_empty() || densities.len() != ks_densities.len() {
        return Err(Error::invalid("Pulay histories must be non-empty and of equal length"));
    }
    let k = densities.len();
    let residuals: Vec<Vec<f64>> = densities
        .iter()
        .zip(ks_densities)
        .map(|(n, nks)| nks.iter().zip(n).map(|(a, b)| a - b).collect())
        .collect();

    let coefficients = pulay_coefficients(&residuals, grid);
    let (coefficients, fallback) = match coefficients {
        Some(c) => (c, false),
        None => {
            let mut c = vec![0.0; k];
            c[k - 1] = 1.0;
            (c, true)
        }
    };

    let npts = grid.num_points();
    let mut density = vec![0.0; npts];
    for ((n, r), c) in densities.iter().zip(&residuals).zip(&coefficients) {
        for i in 0..npts {
            density[i] += c * (n[i] + alpha * r[i]);
        }
    }
    Ok(PulayStep { density, coefficients, fallback })
}

/// Solves the bordered Lagrange system `[B 1; 1ᵀ 0][c; λ] = [0; 1]`.
fn pulay_coefficients(residuals: &[Vec<f64>], grid: &SpatialGrid) -> Option<Vec<f64>> {
    let k = residuals.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let mut b = DMatrix::zeros(k + 1, k + 1);
    for i in 0..k {
        for j in 0..=i {
            let v = grid.inner(&residuals[i], &residuals[j]);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    let scale = (0..k).map(|i| b[(i, i)]).fold(0.0_f64, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for i in 0..k {
        for j in 0..k {
            b[(i, j)] /= scale;
        }
        b[(i, k)] = 1.0;
        b[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = b.lu().solve(&rhs)?;
    let c: Vec<f64> = sol.iter().take(k).copied().collect();
    if c.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsSolution {
    pub density: DensityProfile,
    pub iterations: usize,
    pub residual: f64,
    /// Iterations where Pulay fell back to linear mixing.
    pub fallbacks: usize,
}

/// Ground state of the non-interacting problem `T + V`.
pub fn non_interacting_density(grid: &SpatialGrid, potential: &[f64], mass: f64) -> Result<DensityProfile> {
    let op = build_single_particle_hamiltonian(grid, potential, mass)?;
    let states = op.lowest_states(grid, PARTICLES)?;
    Ok(DensityProfile::from_orbitals(&states.orbitals))
}

/// Self-consistent KS density starting from the non-interacting orbitals.
pub fn solve_ks(grid: &SpatialGrid, potential: &[f64], mass: f64, settings: &ScfSettings) -> Result<KsSolution> {
    let initial = non_interacting_density(grid, potential, mass)?;
    solve_ks_from(grid, potential, mass, settings, initial.values)
}

/// Self-consistent KS density of one potential sample.
pub fn solve_ks_sample(
    grid: &SpatialGrid,
    sample: &PotentialSample,
    problem: &FermionProblem,
    settings: &ScfSettings,
) -> Result<KsSolution> {
    let potential = problem.ks_potential(&sample.raw_features, grid)?;
    solve_ks(grid, &potential, problem.mass(), settings)
}

/// Self-consistent KS density from an arbitrary nonnegative initial guess.
pub fn solve_ks_from(
    grid: &SpatialGrid,
    potential: &[f64],
    mass: f64,
    settings: &ScfSettings,
    initial: Vec<f64>,
) -> Result<KsSolution> {
    settings.validate()?;
    grid.check_len("potential", potential.len())?;
    grid.check_len("initial density", initial.len())?;

    let mut current = initial;
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(settings.memory_mu);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(settings.memory_mu);
    let mut fallbacks = 0;
    let mut residual = f64::INFINITY;

    for iteration in 1..=settings.max_iterations {
        let mut v_ks = potential.to_vec();
        if settings.interacting {
            let vh = hartree_potential(&current, grid, settings.hartree_metric);
            let vxc = xc_potential_lda(&current)?;
            for i in 0..v_ks.len() {
                v_ks[i] += vh[i] + vxc[i];
            }
        }
        let op = build_single_particle_hamiltonian(grid, &v_ks, mass)?;
        let ks_density = DensityProfile::from_orbitals(&op.lowest_states(grid, PARTICLES)?.orbitals).values;

        if inputs.len() == settings.memory_mu {
            inputs.remove(0);
            outputs.remove(0);
        }
        inputs.push(current.clone());
        outputs.push(ks_density);

        let step = pulay_mix(&inputs, &outputs, grid, settings.mixing_alpha)?;
        if step.fallback {
            fallbacks += 1;
            log::debug!("Pulay Gram system singular at iteration {iteration}; linear mixing used");
        }
        let next = enforce_density(step.density, grid, PARTICLES as f64);
        residual = grid.l1_distance(&next, &current);
        current = next;
        if residual < settings.scf_tolerance {
            // report the orbital density of the converged potential, not the mixed iterate
            let values = outputs.pop().expect("history holds the latest output");
            return Ok(KsSolution {
                density: DensityProfile { values, particle_number: PARTICLES as f64 },
                iterations: iteration,
                residual,
                fallbacks,
            });
        }
    }
    Err(Error::ScfNotConverged { iterations: settings.max_iterations, residual })
}

/// Clips negative excursions of an extrapolated density and restores its norm.
fn enforce_density(mut values: Vec<f64>, grid: &SpatialGrid, particles: f64) -> Vec<f64> {
    if values.iter().any(|&v| v < 0.0) {
        values.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let total = grid.integrate(&values);
    if total > 0.0 {
        let s = particles / total;
        values.iter_mut().for_each(|v| *v *= s);
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample_features, FermionProblem};
    use std::f64::consts::PI;

    fn obc() -> SpatialGrid {
        SpatialGrid::new(10.0, 201, Boundary::Obc).unwrap()
    }

    #[test]
    fn free_particle_on_ring_has_zero_mode() {
        let g = SpatialGrid::new(10.0, 200, Boundary::Pbc).unwrap();
        let op = build_single_particle_hamiltonian(&g, &vec![0.0; 200], 1.0).unwrap();
        let s = op.lowest_states(&g, 1).unwrap();
        assert!(s.energies[0].abs() < 1e-10);
    }

    #[test]
    fn particle_in_a_box_ground_level() {
        let g = obc();
        let op = build_single_particle_hamiltonian(&g, &vec![0.0; 201], 1.0).unwrap();
        let e0 = op.lowest_states(&g, 1).unwrap().energies[0];
        assert!((e0 - PI * PI / 200.0).abs() <= 1e-3, "{e0}");
    }

    #[test]
    fn operator_is_symmetric() {
        let g = SpatialGrid::new(10.0, 50, Boundary::Pbc).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| (x * 1.3).sin()).collect();
        let op = build_single_particle_hamiltonian(&g, &v, 0.5).unwrap();
        let asym = (&op.matrix - op.matrix.transpose()).abs().max();
        assert!(asym <= 1e-14);
        assert!(build_single_particle_hamiltonian(&g, &v, 0.0).is_err());
    }

    #[test]
    fn hartree_reference_values() {
        let g = obc();
        assert!(hartree_potential(&vec![0.0; 201], &g, HartreeMetric::Line).iter().all(|&v| v == 0.0));
        let vh = hartree_potential(&vec![0.2; 201], &g, HartreeMetric::Line);
        assert!((vh[100] - 0.4 * 6.0_f64.ln()).abs() < 1e-4, "{}", vh[100]);
        assert!(vh.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn xc_reference_values() {
        assert_eq!(xc_value(0.0), 0.0);
        assert!((xc_value(1.0) + 0.79).abs() < 1e-14);
        // independent evaluation: (−1.19 + 0.885 − 0.3425) · 2^(−0.604)
        let expected = -0.6475 * (-0.604 * std::f64::consts::LN_2).exp();
        assert!((xc_value(0.5) - expected).abs() < 1e-14);
        assert!((xc_value(0.5) + 0.426_007_902_478_141_3).abs() < 1e-12);
        assert!(xc_potential_lda(&[0.1, -1e-3]).is_err());
    }

    #[test]
    fn pulay_single_entry_is_linear_mixing() {
        let g = SpatialGrid::new(1.0, 5, Boundary::Obc).unwrap();
        let n = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let nks = vec![2.0, 2.0, 2.0, 2.0, 2.0];
        let step = pulay_mix(&[n.clone()], &[nks.clone()], &g, 0.3).unwrap();
        assert_eq!(step.coefficients, vec![1.0]);
        for i in 0..5 {
            assert!((step.density[i] - (n[i] + 0.3 * (nks[i] - n[i]))).abs() < 1e-15);
        }
    }

    #[test]
    fn scf_interaction_off_is_bare_density() {
        let g = obc();
        let p = FermionProblem::h2();
        let v = p.potential(&[0.1, -0.2], &g).unwrap();
        let settings = ScfSettings { interacting: false, ..Default::default() };
        let sol = solve_ks(&g, &v, 1.0, &settings).unwrap();
        assert_eq!(sol.iterations, 1);
        let bare = non_interacting_density(&g, &v, 1.0).unwrap();
        assert!(g.l1_distance(&sol.density.values, &bare.values) < 1e-12);
    }

    #[test]
    fn scf_converges_and_normalises() {
        let p = FermionProblem::h2();
        let g = obc();
        let raw = sample_features(&p, 1, 3).remove(0);
        let v = p.potential(&raw, &g).unwrap();
        let sol = solve_ks(&g, &v, 1.0, &ScfSettings::default()).unwrap();
        assert!(sol.residual < 1e-6);
        assert!((g.integrate(&sol.density.values) - 2.0).abs() < 1e-8);
        assert!(sol.density.values.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn scf_max_iterations_reports_failure() {
        let p = FermionProblem::h2();
        let g = obc();
        let v = p.potential(&[0.0, 0.0], &g).unwrap();
        let settings = ScfSettings { max_iterations: 1, ..Default::default() };
        match solve_ks(&g, &v, 1.0, &settings) {
            Err(Error::ScfNotConverged { iterations: 1, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
