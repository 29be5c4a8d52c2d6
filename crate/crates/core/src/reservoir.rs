//! Exact simulation of a small Rydberg-atom reservoir.
//!
//! Product basis ordering: `g ↦ 0`, `r ↦ 1`, site 0 is the most significant
//! bit. With `σᶻ = 2n − 1` the all-ground state has `⟨σᶻ⟩ = −1` everywhere.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Van der Waals coefficient in rad·μm⁶/μs.
pub const DEFAULT_C6: f64 = 865_723.02;

/// Corners of a square of side `a` (μm): q0=(0,0), q1=(a,0), q2=(0,a), q3=(a,a).
///
/// Edges are (0,1), (0,2), (1,3), (2,3); diagonals are (0,3), (1,2).
pub fn square_geometry(side: f64) -> Vec<[f64; 2]> {
    vec![[0.0, 0.0], [side, 0.0], [0.0, side], [side, side]]
}

/// `V_NN = C6 / a⁶`.
pub fn nn_interaction(side: f64, c6: f64) -> f64 {
    c6 / side.powi(6)
}

/// Inverse of [`nn_interaction`].
pub fn side_from_vnn(vnn: f64, c6: f64) -> f64 {
    (c6 / vnn).powf(1.0 / 6.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    /// Atom coordinates in μm.
    pub positions: Vec<[f64; 2]>,
    pub omega_glob: f64,
    pub delta_glob: f64,
    pub delta_loc: f64,
    pub c6: f64,
    /// Rescaled feature applied to every non-addressed site.
    pub v_homo: f64,
    /// Sites receiving the features, in feature order.
    pub addressed_sites: Vec<usize>,
}

impl ReservoirConfig {
    /// Square reservoir with the nearest-neighbour coupling set to `vnn` rad/μs.
    pub fn square_with_vnn(
        vnn: f64,
        omega_glob: f64,
        delta_glob: f64,
        delta_loc: f64,
        v_homo: f64,
        addressed_sites: Vec<usize>,
    ) -> Self {
        Self {
            positions: square_geometry(side_from_vnn(vnn, DEFAULT_C6)),
            omega_glob,
            delta_glob,
            delta_loc,
            c6: DEFAULT_C6,
            v_homo,
            addressed_sites,
        }
    }

    /// H₂ layout: features on the neighbouring sites 0 and 2.
    pub fn h2(vnn: f64, omega_glob: f64, delta_glob: f64, delta_loc: f64, v_homo: f64) -> Self {
        Self::square_with_vnn(vnn, omega_glob, delta_glob, delta_loc, v_homo, vec![0, 2])
    }

    /// Triple-well layout: `(h1, h2, δ1, δ2)` on sites 0..3.
    pub fn triple_well(vnn: f64, omega_glob: f64, delta_glob: f64, delta_loc: f64) -> Self {
        Self::square_with_vnn(vnn, omega_glob, delta_glob, delta_loc, 0.5, vec![0, 1, 2, 3])
    }

    pub fn num_qubits(&self) -> usize {
        self.positions.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits()
    }

    pub fn num_observables(&self) -> usize {
        let l = self.num_qubits();
        l * (l + 1) / 2
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let [xi, yi] = self.positions[i];
        let [xj, yj] = self.positions[j];
        let d2 = (xi - xj).powi(2) + (yi - yj).powi(2);
        self.c6 / d2.powi(3)
    }

    /// Nearest-neighbour coupling (smallest pair distance).
    pub fn vnn(&self) -> f64 {
        let l = self.num_qubits();
        (0..l)
            .flat_map(|i| (i + 1..l).map(move |j| (i, j)))
            .map(|(i, j)| self.coupling(i, j))
            .fold(0.0, f64::max)
    }

    /// Bloch precession frequency used to rescale measurement times:
    /// `√(Ω² + Δ_loc²)` when `Δ_glob = 0`, otherwise `√(Ω² + Δ_glob²)`.
    pub fn omega_max(&self) -> f64 {
        let d = if self.delta_glob == 0.0 { self.delta_loc } else { self.delta_glob };
        self.omega_glob.hypot(d)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_qubits();
        if l == 0 || l > 12 {
            return Err(Error::invalid(format!("unsupported qubit count {l}")));
        }
        if self.addressed_sites.iter().any(|&s| s >= l) {
            return Err(Error::invalid("addressed site index out of range"));
        }
        let mut seen = self.addressed_sites.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.addressed_sites.len() {
            return Err(Error::invalid("addressed sites must be distinct"));
        }
        for i in 0..l {
            for j in i + 1..l {
                if self.positions[i] == self.positions[j] {
                    return Err(Error::invalid(format!("sites {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    /// Per-site detunings `Δ_j = Δ_glob + v_j Δ_loc`.
    pub fn detunings(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.addressed_sites.len() {
            return Err(Error::invalid(format!(
                "reservoir addresses {} sites but got {} features",
                self.addressed_sites.len(),
                features.len()
            )));
        }
        if let Some(v) = features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("rescaled feature {v} outside [0, 1]")));
        }
        let mut v = vec![self.v_homo; self.num_qubits()];
        for (&site, &f) in self.addressed_sites.iter().zip(features) {
            v[site] = f;
        }
        Ok(v.into_iter().map(|vj| self.delta_glob + vj * self.delta_loc).collect())
    }
}

#[inline]
fn occupied(index: usize, site: usize, l: usize) -> bool {
    (index >> (l - 1 - site)) & 1 == 1
}

/// `H = (Ω/2) Σ σˣ_j − Σ Δ_j n_j + Σ_{i<j} C6/d_ij⁶ n_i n_j` (real symmetric).
pub fn build_reservoir_hamiltonian(config: &ReservoirConfig, features: &[f64]) -> Result<DMatrix<f64>> {
    config.validate()?;
    let detunings = config.detunings(features)?;
    let l = config.num_qubits();
    let dim = config.dim();
    let mut couplings = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in i + 1..l {
            couplings[i][j] = config.coupling(i, j);
        }
    }
    let mut h = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        let mut diag = 0.0;
        for i in 0..l {
            if occupied(s, i, l) {
                diag -= detunings[i];
                for j in i + 1..l {
                    if occupied(s, j, l) {
                        diag += couplings[i][j];
                    }
                }
            }
            let flipped = s ^ (1 << (l - 1 - i));
            h[(flipped, s)] += 0.5 * config.omega_glob;
        }
        h[(s, s)] = diag;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<Complex<f64>>,
}

impl QuantumState {
    /// `|g…g⟩`.
    pub fn ground(num_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn num_qubits(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }
}

/// Spectral propagator `exp(−iHt)|g…g⟩` of a time-independent Hamiltonian.
#[derive(Debug, Clone)]
pub struct Propagator {
    energies: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    num_qubits: usize,
}

impl Propagator {
    pub fn new(hamiltonian: DMatrix<f64>) -> Self {
        let dim = hamiltonian.nrows();
        let eig = SymmetricEigen::new(hamiltonian);
        Self {
            energies: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
            num_qubits: dim.trailing_zeros() as usize,
        }
    }

    pub fn evolve(&self, time: f64) -> Result<QuantumState> {
        if !(time >= 0.0) {
            return Err(Error::invalid(format!("measurement time must be non-negative, got {time}")));
        }
        if time == 0.0 {
            return Ok(QuantumState::ground(self.num_qubits));
        }
        let dim = self.energies.len();
        // overlaps ⟨k|g…g⟩ are the first row of the eigenvector matrix
        let phases: Vec<Complex<f64>> = (0..dim)
            .map(|k| Complex::from_polar(self.eigenvectors[(0, k)], -self.energies[k] * time))
            .collect();
        let amplitudes = (0..dim)
            .map(|s| (0..dim).map(|k| phases[k] * self.eigenvectors[(s, k)]).sum())
            .collect();
        Ok(QuantumState { amplitudes })
    }
}

pub fn evolve(hamiltonian: &DMatrix<f64>, time: f64) -> Result<QuantumState> {
    Propagator::new(hamiltonian.clone()).evolve(time)
}

/// `[⟨σᶻ_0⟩..⟨σᶻ_{L−1}⟩, ⟨σᶻ_iσᶻ_j⟩ for i<j in lexicographic order]` at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub time: f64,
    pub values: Vec<f64>,
}

pub fn observable_names(num_qubits: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..num_qubits).map(|j| format!("mz{j}")).collect();
    for i in 0..num_qubits {
        for j in i + 1..num_qubits {
            names.push(format!("czz{i}{j}"));
        }
    }
    names
}

pub fn measure(state: &QuantumState, time: f64) -> Result<MeasurementVector> {
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("state is not normalised (norm {norm})")));
    }
    let l = state.num_qubits();
    let mut mz = vec![0.0; l];
    let mut czz = vec![0.0; l * (l - 1) / 2];
    for (s, a) in state.amplitudes.iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let z: Vec<f64> = (0..l).map(|j| if occupied(s, j, l) { 1.0 } else { -1.0 }).collect();
        let mut k = 0;
        for i in 0..l {
            mz[i] += p * z[i];
            for j in i + 1..l {
                czz[k] += p * z[i] * z[j];
                k += 1;
            }
        }
    }
    mz.extend(czz);
    Ok(MeasurementVector { time, values: mz })
}

/// Default measurement grid: 48 points with `t·Ω_max` uniform in `[0.05π, 2π]`.
pub fn default_times(config: &ReservoirConfig) -> Vec<f64> {
    scaled_times(config, 0.05 * PI, 2.0 * PI, 48)
}

pub fn scaled_times(config: &ReservoirConfig, lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let w = config.omega_max();
    if count == 1 {
        return vec![lo / w];
    }
    (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64) / w)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub sample_id: usize,
    pub time: f64,
    pub values: Vec<f64>,
}

/// Measurement vectors for every (sample, time), sample-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MeasurementTable {
    pub rows: Vec<MeasurementRow>,
}

impl MeasurementTable {
    /// Rows at one time index, in sample order.
    pub fn at_time(&self, time: f64) -> Vec<&MeasurementRow> {
        self.rows.iter().filter(|r| r.time == time).collect()
    }
}

/// Embeds each feature vector (ids are positions in `samples`).
///
/// One Hamiltonian and one diagonalisation per sample, shared by all times.
pub fn embed_samples(config: &ReservoirConfig, samples: &[Vec<f64>], times: &[f64]) -> Result<MeasurementTable> {
    if samples.is_empty() || times.is_empty() {
        return Err(Error::invalid("embedding needs at least one sample and one time"));
    }
    let per_sample: Vec<Vec<MeasurementRow>> = samples
        .par_iter()
        .enumerate()
        .map(|(id, v)| {
            let prop = Propagator::new(build_reservoir_hamiltonian(config, v)?);
            times
                .iter()
                .map(|&t| {
                    let m = measure(&prop.evolve(t)?, t)?;
                    Ok(MeasurementRow { sample_id: id, time: t, values: m.values })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementTable { rows: per_sample.into_iter().flatten().collect() })
}
