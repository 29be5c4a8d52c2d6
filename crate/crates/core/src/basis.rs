//! Truncated density basis assembled from three region-restricted
//! single-particle problems and orthonormalised by modified Gram-Schmidt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::ks::{build_single_particle_hamiltonian, fix_sign};
use crate::models::{FermionProblem, PotentialParams};

/// Wall height of the region potentials.
pub const DEFAULT_H_BASIS: f64 = 20.0;

const GS_COLLAPSE: f64 = 1e-10;

/// Left, centre and right region potentials.
///
/// H₂ wells are the closed intervals `[0, X_A]`, `[X_A, X_B]`, `[X_B, L]`
/// at the nominal nuclei positions. Triple-well wells are the open intervals
/// between `x0..x3`, with the centre well at depth `d`.
pub fn build_region_potentials(problem: &FermionProblem, grid: &SpatialGrid, h_basis: f64) -> [Vec<f64>; 3] {
    let x = grid.nodes();
    let map = |f: &dyn Fn(f64) -> f64| x.iter().map(|&xi| f(xi)).collect::<Vec<f64>>();
    match problem.params {
        PotentialParams::H2 { xa0, xb0 } => [
            map(&|xi| if xi <= xa0 { 0.0 } else { h_basis }),
            map(&|xi| if xi >= xa0 && xi <= xb0 { 0.0 } else { h_basis }),
            map(&|xi| if xi >= xb0 { 0.0 } else { h_basis }),
        ],
        PotentialParams::TripleWell { x0, x1, x2, x3, d, .. } => [
            map(&|xi| if xi > x0 && xi < x1 { 0.0 } else { h_basis }),
            map(&|xi| if xi > x1 && xi < x2 { d } else { h_basis }),
            map(&|xi| if xi > x2 && xi < x3 { 0.0 } else { h_basis }),
        ],
    }
}

/// Orthonormal (under grid quadrature) truncated basis `Ψ⁽ˡ⁾`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionBasis {
    pub functions: Vec<Vec<f64>>,
    pub n_left: usize,
    pub n_center: usize,
    pub n_right: usize,
    pub h_basis: f64,
    pub grid: SpatialGrid,
}

/// Expansion coefficients `u⁽ˡ⁾` of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub sample_id: usize,
    pub u: Vec<f64>,
}

/// Lowest `count` eigenvectors of `T + V_region` for each region, in
/// L, C, R order, before orthonormalisation.
pub fn raw_region_states(
    problem: &FermionProblem,
    grid: &SpatialGrid,
    sizes: [usize; 3],
    h_basis: f64,
) -> Result<Vec<Vec<f64>>> {
    let potentials = build_region_potentials(problem, grid, h_basis);
    let mut raw = Vec::with_capacity(sizes.iter().sum());
    for (v, &count) in potentials.iter().zip(&sizes) {
        if count == 0 {
            continue;
        }
        let op = build_single_particle_hamiltonian(grid, v, problem.mass())?;
        raw.extend(op.lowest_states(grid, count)?.orbitals);
    }
    Ok(raw)
}

/// Modified Gram-Schmidt under the grid inner product.
pub fn gram_schmidt(vectors: Vec<Vec<f64>>, grid: &SpatialGrid) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (index, mut v) in vectors.into_iter().enumerate() {
        for q in &out {
            let c = grid.inner(q, &v);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let norm = grid.inner(&v, &v).sqrt();
        if !(norm >= GS_COLLAPSE) {
            return Err(Error::GramSchmidtDegenerate { index, norm });
        }
        v.iter_mut().for_each(|a| *a /= norm);
        out.push(v);
    }
    Ok(out)
}

impl ExpansionBasis {
    pub fn build(
        problem: &FermionProblem,
        grid: &SpatialGrid,
        n_left: usize,
        n_center: usize,
        n_right: usize,
        h_basis: f64,
    ) -> Result<Self> {
        let total = n_left + n_center + n_right;
        if total == 0 || total > grid.num_points() {
            return Err(Error::invalid(format!(
                "basis size {total} must lie in 1..={}",
                grid.num_points()
            )));
        }
        if grid.boundary() != problem.boundary {
            return Err(Error::invalid("basis grid boundary differs from the problem's"));
        }
        let raw = raw_region_states(problem, grid, [n_left, n_center, n_right], h_basis)?;
        let mut functions = gram_schmidt(raw, grid)?;
        functions.iter_mut().for_each(|f| fix_sign(f));
        Ok(Self { functions, n_left, n_center, n_right, h_basis, grid: grid.clone() })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// `max |⟨Ψi, Ψj⟩ − δij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, a) in self.functions.iter().enumerate() {
            for (j, b) in self.functions.iter().enumerate().take(i + 1) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.grid.inner(a, b) - target).abs());
            }
        }
        worst
    }

    pub fn project(&self, sample_id: usize, density: &[f64]) -> Result<CoefficientVector> {
        self.grid.check_len("density", density.len())?;
        let u = self.functions.iter().map(|f| self.grid.inner(f, density)).collect();
        Ok(CoefficientVector { sample_id, u })
    }

    /// `Σ u⁽ˡ⁾ Ψ⁽ˡ⁾(x)`; may dip slightly below zero.
    pub fn reconstruct(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} coefficients for a basis of size {}",
                u.len(),
                self.len()
            )));
        }
        let mut out = vec![0.0; self.grid.num_points()];
        for (c, f) in u.iter().zip(&self.functions) {
            out.iter_mut().zip(f).for_each(|(o, v)| *o += c * v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn h2_region_potentials() {
        let p = FermionProblem::h2();
        let g = p.default_grid();
        let [vl, vc, vr] = build_region_potentials(&p, &g, 20.0);
        for (i, x) in g.nodes().into_iter().enumerate() {
            assert_eq!(vl[i], if x <= 4.0 { 0.0 } else { 20.0 });
            assert_eq!(vr[i], if x >= 6.0 { 0.0 } else { 20.0 });
            assert!(vc[i] == 0.0 || vc[i] == 20.0);
        }
    }

    #[test]
    fn triple_well_centre_region() {
        let p = FermionProblem::triple_well();
        let g = p.default_grid();
        let [vl, vc, vr] = build_region_potentials(&p, &g, 20.0);
        for (i, x) in g.nodes().into_iter().enumerate() {
            assert_eq!(vc[i], if x > 3.5 && x < 6.5 { -0.2 } else { 20.0 });
            assert!([0.0, 20.0].contains(&vl[i]) && [0.0, 20.0].contains(&vr[i]));
        }
    }

    #[test]
    fn projection_of_basis_function_is_unit_vector() {
        let p = FermionProblem::h2();
        let g = p.default_grid();
        let b = ExpansionBasis::build(&p, &g, 4, 4, 4, DEFAULT_H_BASIS).unwrap();
        let u = b.project(0, &b.functions[3]).unwrap().u;
        for (i, c) in u.iter().enumerate() {
            let target = if i == 3 { 1.0 } else { 0.0 };
            assert!((c - target).abs() < 1e-10);
        }
        assert!(b.reconstruct(&vec![0.0; 12]).unwrap().iter().all(|&x| x == 0.0));
        assert!(b.project(0, &[1.0; 10]).is_err());
        assert!(b.reconstruct(&[1.0; 3]).is_err());
    }

    #[test]
    fn collinear_input_is_reported() {
        let g = SpatialGrid::new(1.0, 11, Boundary::Obc).unwrap();
        let a = vec![1.0; 11];
        let err = gram_schmidt(vec![a.clone(), a.iter().map(|x| 2.0 * x).collect()], &g).unwrap_err();
        assert!(matches!(err, Error::GramSchmidtDegenerate { index: 1, .. }));
    }
}
