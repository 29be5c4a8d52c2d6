//! External-potential families, random feature draws and feature rescaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Boundary, SpatialGrid};

/// Closed interval `[lo, hi]` a feature is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub lo: f64,
    pub hi: f64,
}

impl FeatureRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("degenerate feature range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    H2,
    TripleWell,
}

/// Fixed (sample-independent) parameters of a potential family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PotentialParams {
    /// Two softened-Coulomb nuclei at nominal positions `xa0`, `xb0`.
    H2 { xa0: f64, xb0: f64 },
    /// Walls `h0`/`h3` outside `[x0, x3]`, barriers centred at `x1`, `x2`,
    /// central floor `d`.
    TripleWell {
        x0: f64,
        x1: f64,
        x2: f64,
        x3: f64,
        h0: f64,
        h3: f64,
        d: f64,
    },
}

/// Two-fermion problem: potential family, particle masses, domain and feature ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FermionProblem {
    pub params: PotentialParams,
    /// Masses of the two fermions; the single-particle operators use `masses[0]`.
    pub masses: [f64; 2],
    pub length: f64,
    pub boundary: Boundary,
    pub feature_ranges: Vec<FeatureRange>,
}

impl FermionProblem {
    /// 1D H₂: nuclei at 4 and 6 a.u. displaced by up to ±0.5 a.u., unit masses, OBC.
    pub fn h2() -> Self {
        Self {
            params: PotentialParams::H2 { xa0: 4.0, xb0: 6.0 },
            masses: [1.0, 1.0],
            length: 10.0,
            boundary: Boundary::Obc,
            feature_ranges: vec![
                FeatureRange { lo: -0.5, hi: 0.5 },
                FeatureRange { lo: -0.5, hi: 0.5 },
            ],
        }
    }

    /// Triple well with features `(h1, h2, δ1, δ2)`, masses 0.5, PBC.
    pub fn triple_well() -> Self {
        Self {
            params: PotentialParams::TripleWell {
                x0: 0.5,
                x1: 3.5,
                x2: 6.5,
                x3: 9.5,
                h0: 5.0,
                h3: 5.0,
                d: -0.2,
            },
            masses: [0.5, 0.5],
            length: 10.0,
            boundary: Boundary::Pbc,
            feature_ranges: vec![
                FeatureRange { lo: 0.8, hi: 1.6 },
                FeatureRange { lo: 0.8, hi: 1.6 },
                FeatureRange { lo: 0.2, hi: 0.5 },
                FeatureRange { lo: 0.2, hi: 0.5 },
            ],
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self.params {
            PotentialParams::H2 { .. } => ProblemKind::H2,
            PotentialParams::TripleWell { .. } => ProblemKind::TripleWell,
        }
    }

    pub fn num_features(&self) -> usize {
        match self.kind() {
            ProblemKind::H2 => 2,
            ProblemKind::TripleWell => 4,
        }
    }

    pub fn mass(&self) -> f64 {
        self.masses[0]
    }

    /// Checks feature count, range validity and masses.
    pub fn validate(&self) -> Result<()> {
        if self.feature_ranges.len() != self.num_features() {
            return Err(Error::invalid(format!(
                "{:?} needs {} feature ranges, got {}",
                self.kind(),
                self.num_features(),
                self.feature_ranges.len()
            )));
        }
        for r in &self.feature_ranges {
            FeatureRange::new(r.lo, r.hi)?;
        }
        if self.masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::invalid("masses must be positive"));
        }
        if !(self.length > 0.0) {
            return Err(Error::invalid("domain length must be positive"));
        }
        Ok(())
    }

    /// Grid with the default resolution (Δx = 0.05 on a 10 a.u. box).
    pub fn default_grid(&self) -> SpatialGrid {
        let n = match self.boundary {
            Boundary::Obc => (self.length / 0.05).round() as usize + 1,
            Boundary::Pbc => (self.length / 0.05).round() as usize,
        };
        SpatialGrid::new(self.length, n.max(3), self.boundary).expect("valid default grid")
    }

    /// Potential as fed to the Kohn-Sham operator.
    ///
    /// Smooth families are sampled at the nodes; the triple well uses cell
    /// averages so the discrete barrier widths track the features continuously.
    pub fn ks_potential(&self, features: &[f64], grid: &SpatialGrid) -> Result<Vec<f64>> {
        match self.params {
            PotentialParams::TripleWell { .. } if features.len() == 4 => {
                triple_well_cell_average(self, [features[0], features[1], features[2], features[3]], grid)
            }
            _ => self.potential(features, grid),
        }
    }

    pub fn potential(&self, features: &[f64], grid: &SpatialGrid) -> Result<Vec<f64>> {
        if features.len() != self.num_features() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.num_features(),
                features.len()
            )));
        }
        match self.params {
            PotentialParams::H2 { .. } => h2_potential(self, [features[0], features[1]], grid),
            PotentialParams::TripleWell { .. } => {
                triple_well_potential(self, [features[0], features[1], features[2], features[3]], grid)
            }
        }
    }
}

/// `V(x) = −1/(|x−X_A|+1) − 1/(|x−X_B|+1)` with displaced nuclei.
pub fn h2_potential(problem: &FermionProblem, shifts: [f64; 2], grid: &SpatialGrid) -> Result<Vec<f64>> {
    let PotentialParams::H2 { xa0, xb0 } = problem.params else {
        return Err(Error::invalid("h2_potential called on a non-H2 problem"));
    };
    let xa = xa0 + shifts[0];
    let xb = xb0 + shifts[1];
    Ok(grid
        .nodes()
        .into_iter()
        .map(|x| -1.0 / ((x - xa).abs() + 1.0) - 1.0 / ((x - xb).abs() + 1.0))
        .collect())
}

/// Piecewise-constant triple well for features `(h1, h2, δ1, δ2)`.
///
/// Intervals are half-open on the left, so a node sitting exactly on a
/// boundary takes the value of the earlier case.
pub fn triple_well_potential(
    problem: &FermionProblem,
    features: [f64; 4],
    grid: &SpatialGrid,
) -> Result<Vec<f64>> {
    let PotentialParams::TripleWell { x0, x1, x2, x3, h0, h3, d } = problem.params else {
        return Err(Error::invalid("triple_well_potential called on a non-triple-well problem"));
    };
    let [h1, h2, w1, w2] = features;
    if w1 < 0.0 || w2 < 0.0 {
        return Err(Error::invalid("barrier widths must be non-negative"));
    }
    let edges = [x0, x1 - 0.5 * w1, x1 + 0.5 * w1, x2 - 0.5 * w2, x2 + 0.5 * w2, x3];
    if edges.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::invalid(format!(
            "triple-well regions overlap: edges {edges:?}"
        )));
    }
    let values = [h0, 0.0, h1, d, h2, 0.0];
    Ok(grid
        .nodes()
        .into_iter()
        .map(|x| {
            edges
                .iter()
                .position(|&e| x <= e)
                .map_or(h3, |i| values[i])
        })
        .collect())
}

/// Cell-averaged triple well: node `i` carries the mean of the potential
/// over `[x_i − Δx/2, x_i + Δx/2]` (periodically wrapped under PBC).
///
/// Steps whose edges fall between nodes then enter the discrete operator
/// with their exact area, which restores second-order grid convergence.
pub fn triple_well_cell_average(
    problem: &FermionProblem,
    features: [f64; 4],
    grid: &SpatialGrid,
) -> Result<Vec<f64>> {
    let PotentialParams::TripleWell { x0, x1, x2, x3, h0, h3, d } = problem.params else {
        return Err(Error::invalid("triple_well_cell_average called on a non-triple-well problem"));
    };
    // validates the geometry
    triple_well_potential(problem, features, &SpatialGrid::new(grid.length(), 3, grid.boundary())?)?;
    let [h1, h2, w1, w2] = features;
    let edges = [x0, x1 - 0.5 * w1, x1 + 0.5 * w1, x2 - 0.5 * w2, x2 + 0.5 * w2, x3];
    let values = [h0, 0.0, h1, d, h2, 0.0, h3];
    let len = grid.length();
    let h = grid.spacing();
    let integral = |a: f64, b: f64| -> f64 {
        (0..values.len())
            .map(|k| {
                let lo = if k == 0 { f64::NEG_INFINITY } else { edges[k - 1] };
                let hi = edges.get(k).copied().unwrap_or(f64::INFINITY);
                values[k] * (b.min(hi) - a.max(lo)).max(0.0)
            })
            .sum()
    };
    Ok(grid
        .nodes()
        .into_iter()
        .map(|x| {
            let (a, b) = (x - 0.5 * h, x + 0.5 * h);
            let total = match grid.boundary() {
                Boundary::Pbc if a < 0.0 => integral(a + len, len) + integral(0.0, b),
                Boundary::Pbc if b > len => integral(a, len) + integral(0.0, b - len),
                _ => integral(a, b),
            };
            total / h
        })
        .collect())
}

/// SplitMix64 finaliser; maps (master, index) to an independent child seed.
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `count` raw feature vectors i.i.d. uniform over the problem's ranges.
///
/// Vector `i` depends only on `(seed, i)`.
pub fn sample_features(problem: &FermionProblem, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, i as u64));
            problem
                .feature_ranges
                .iter()
                .map(|r| rng.random_range(r.lo..=r.hi))
                .collect()
        })
        .collect()
}

/// Maps raw features onto `[0, 1]` using the declared (not empirical) ranges.
pub fn rescale_features(raw: &[f64], ranges: &[FeatureRange]) -> Result<Vec<f64>> {
    if raw.len() != ranges.len() {
        return Err(Error::invalid(format!(
            "{} features but {} ranges",
            raw.len(),
            ranges.len()
        )));
    }
    raw.iter()
        .zip(ranges)
        .map(|(&v, r)| {
            if !r.contains(v) {
                return Err(Error::invalid(format!(
                    "feature {v} outside [{}, {}]",
                    r.lo, r.hi
                )));
            }
            Ok((v - r.lo) / r.width())
        })
        .collect()
}

/// One potential configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSample {
    pub sample_id: usize,
    pub raw_features: Vec<f64>,
    pub rescaled_features: Vec<f64>,
    pub potential: Vec<f64>,
}

impl PotentialSample {
    pub fn new(
        problem: &FermionProblem,
        grid: &SpatialGrid,
        sample_id: usize,
        raw_features: Vec<f64>,
    ) -> Result<Self> {
        let rescaled_features = rescale_features(&raw_features, &problem.feature_ranges)?;
        let potential = problem.potential(&raw_features, grid)?;
        Ok(Self { sample_id, raw_features, rescaled_features, potential })
    }
}

/// Draws and evaluates `count` samples with ids `0..count`.
pub fn generate_samples(
    problem: &FermionProblem,
    grid: &SpatialGrid,
    count: usize,
    seed: u64,
) -> Result<Vec<PotentialSample>> {
    sample_features(problem, count, seed)
        .into_iter()
        .enumerate()
        .map(|(i, raw)| PotentialSample::new(problem, grid, i, raw))
        .collect()
}
