//! Pairwise (SMO-style) solver for the ε-SVR dual in the difference
//! variables `δ_k = α_k − α_k*`:
//!
//! ```text
//! min  ½ δᵀKδ − yᵀδ + ε Σ|δ_k|   s.t.  Σ δ_k = 0,  −C ≤ δ_k ≤ C
//! ```
//!
//! Each step moves along `e_i − e_j` for a KKT-violating pair (first index
//! maximally violating, second chosen by predicted decrease) and minimises
//! the piecewise-quadratic restriction exactly. Low-rank kernels with large
//! C make pairwise steps zigzag; when the step budget runs out the solver
//! solves the KKT system on the current free set, falling back to an
//! interior-point solve followed by the same exact polish.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ipm;
use super::kernel::{is_psd, KernelKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// KKT violation threshold, multiplied by `max(1, max|y|)`.
    pub kkt_tolerance: f64,
    /// Relative duality-gap threshold: `gap < gap_tolerance · (1 + |dual|)`.
    pub gap_tolerance: f64,
    /// Pairwise steps before switching to the finishing stage.
    pub max_iterations: usize,
    /// Interior-point iterations of the finishing stage.
    pub finishing_iterations: usize,
    /// Skip the eigenvalue PSD check (caller already validated the full Gram).
    pub assume_psd: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kkt_tolerance: 1e-3, gap_tolerance: 1e-6, max_iterations: 200, finishing_iterations: 200, assume_psd: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    /// `α_k − α_k*` per training sample.
    pub dual: Vec<f64>,
    pub bias: f64,
    /// Indices (into the training set) with non-zero dual coefficient.
    pub support: Vec<usize>,
    pub c: f64,
    pub epsilon: f64,
    pub kernel: KernelKind,
    /// Which expansion coefficient the model predicts.
    pub target_index: usize,
    /// Sample ids of the training rows, in dual order.
    pub training_ids: Vec<usize>,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl SvrModel {
    pub fn predict(&self, k_row: &[f64]) -> Result<f64> {
        predict(self, k_row)
    }
}

/// `Σ δ_k K(x_k, x) + b`.
pub fn predict(model: &SvrModel, k_row: &[f64]) -> Result<f64> {
    if k_row.len() != model.dual.len() {
        return Err(Error::invalid(format!(
            "kernel row has {} entries, model has {} training samples",
            k_row.len(),
            model.dual.len()
        )));
    }
    Ok(model.dual.iter().zip(k_row).map(|(d, k)| d * k).sum::<f64>() + model.bias)
}

pub fn train_svr(gram: &DMatrix<f64>, y: &[f64], c: f64, epsilon: f64) -> Result<SvrModel> {
    train_svr_with(gram, y, c, epsilon, &SolverOptions::default())
}

/// Hard cap on pairwise steps across all stages.
const MAX_PASSES: usize = 100_000;
const POLISH_EVERY: usize = 1_000;

#[derive(Clone)]
struct State<'a> {
    k: &'a DMatrix<f64>,
    y: &'a [f64],
    c: f64,
    eps: f64,
    delta: Vec<f64>,
    /// `Kδ − y`
    grad: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(k: &'a DMatrix<f64>, y: &'a [f64], c: f64, eps: f64, delta: Vec<f64>) -> Self {
        let n = y.len();
        let grad = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * delta[j]).sum::<f64>() - y[i]).collect();
        Self { k, y, c, eps, delta, grad }
    }

    fn gap_ok(&self, tol: f64) -> bool {
        self.gap(self.bias()) < tol * (1.0 + self.dual_objective().abs())
    }

    fn kkt_ok(&self, violation_tol: f64, gap_tol: f64) -> bool {
        let feasible = self.delta.iter().all(|d| d.abs() <= self.c)
            && self.delta.iter().sum::<f64>().abs() <= 1e-10 * self.c.max(1.0);
        let violation = self.select().map_or(0.0, |(_, _, u, d)| d - u);
        feasible && violation <= violation_tol && self.gap_ok(gap_tol)
    }

    /// First exact polish that passes the KKT test, trying looser snapping.
    fn finish(&self, violation_tol: f64, gap_tol: f64) -> Option<State<'a>> {
        [1e-10, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2]
            .iter()
            .filter_map(|&t| self.polished_with(t))
            .find(|p| p.kkt_ok(violation_tol, gap_tol))
    }

    /// Snaps entries near zero (relative to the largest `|δ|`) or near a bound
    /// (relative to `C`), then solves the KKT system
    /// `K_FF δ_F + b = y_F − ε sign(δ_F) − K_FB δ_B`, `Σ δ = 0` for the free set.
    fn polished_with(&self, rel: f64) -> Option<State<'a>> {
        let n = self.delta.len();
        let largest = self.delta.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let (zero_tol, bound_tol) = (rel * largest, rel * self.c);
        let mut delta: Vec<f64> = self
            .delta
            .iter()
            .map(|&d| {
                if d.abs() <= zero_tol {
                    0.0
                } else if d >= self.c - bound_tol {
                    self.c
                } else if d <= -self.c + bound_tol {
                    -self.c
                } else {
                    d
                }
            })
            .collect();
        // Entries whose solved value leaves their sign orthant or box get
        // pinned to zero or the bound, and the reduced system is solved again.
        for _ in 0..=n {
            let free: Vec<usize> = (0..n).filter(|&i| delta[i] != 0.0 && delta[i].abs() < self.c).collect();
            if free.is_empty() {
                break;
            }
            let is_free = |i: usize| free.binary_search(&i).is_ok();
            let m = free.len();
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut rhs = nalgebra::DVector::<f64>::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = self.k[(i, j)];
                }
                a[(r, m)] = 1.0;
                a[(m, r)] = 1.0;
                let bound: f64 = (0..n).filter(|&j| !is_free(j)).map(|j| self.k[(i, j)] * delta[j]).sum();
                rhs[r] = self.y[i] - self.eps * delta[i].signum() - bound;
            }
            rhs[m] = -(0..n).filter(|&j| !is_free(j)).map(|j| delta[j]).sum::<f64>();
            // Degenerate free sets (more free points than the kernel rank
            // plus one) leave the system singular; take the minimum-norm solution.
            let sol = match a.clone().lu().solve(&rhs) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => a.svd(true, true).solve(&rhs, 1e-12).ok()?,
            };
            let mut clean = true;
            for (r, &i) in free.iter().enumerate() {
                let v = sol[r];
                if v.signum() != delta[i].signum() {
                    delta[i] = 0.0;
                    clean = false;
                } else if v.abs() > self.c {
                    delta[i] = self.c.copysign(v);
                    clean = false;
                } else {
                    delta[i] = v;
                }
            }
            if clean {
                break;
            }
        }
        Some(State::new(self.k, self.y, self.c, self.eps, delta))
    }

    fn up(&self, i: usize) -> f64 {
        self.grad[i] + if self.delta[i] >= 0.0 { self.eps } else { -self.eps }
    }

    fn down(&self, i: usize) -> f64 {
        self.grad[i] + if self.delta[i] > 0.0 { self.eps } else { -self.eps }
    }

    /// (argmin up over movable-up, argmax down over movable-down, violation)
    fn select(&self) -> Option<(usize, usize, f64, f64)> {
        let mut best_up: Option<(usize, f64)> = None;
        let mut best_down: Option<(usize, f64)> = None;
        for k in 0..self.delta.len() {
            if self.delta[k] < self.c {
                let u = self.up(k);
                if best_up.is_none_or(|(_, b)| u < b) {
                    best_up = Some((k, u));
                }
            }
            if self.delta[k] > -self.c {
                let d = self.down(k);
                if best_down.is_none_or(|(_, b)| d > b) {
                    best_down = Some((k, d));
                }
            }
        }
        let (i, u) = best_up?;
        let (_, d) = best_down?;
        Some((i, self.partner(i, u).unwrap_or(best_down?.0), u, d))
    }

    /// Second-order choice of the decreasing index for a fixed `i`: largest
    /// predicted decrease `(down_j − up_i)² / a_ij` among violating `j`.
    fn partner(&self, i: usize, up_i: f64) -> Option<usize> {
        let kii = self.k[(i, i)];
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.delta.len() {
            if j == i || self.delta[j] <= -self.c {
                continue;
            }
            let b = self.down(j) - up_i;
            if b <= 0.0 {
                continue;
            }
            let a = (kii + self.k[(j, j)] - 2.0 * self.k[(i, j)]).max(1e-12);
            let gain = b * b / a;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Exact minimiser of the objective along `δ_i += t, δ_j −= t`, `t ≥ 0`.
    fn step(&mut self, i: usize, j: usize) -> bool {
        let (di, dj) = (self.delta[i], self.delta[j]);
        let a = (self.k[(i, i)] + self.k[(j, j)] - 2.0 * self.k[(i, j)]).max(0.0);
        let g = self.grad[i] - self.grad[j];
        let eps = self.eps;
        let t_max = (self.c - di).min(dj + self.c);
        if !(t_max > 0.0) {
            return false;
        }
        let phi = |t: f64| 0.5 * a * t * t + g * t + eps * ((di + t).abs() + (dj - t).abs());

        let mut knots = vec![0.0, t_max];
        if di < 0.0 && -di < t_max {
            knots.push(-di);
        }
        if dj > 0.0 && dj < t_max {
            knots.push(dj);
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let mut best_t = 0.0;
        let mut best_val = phi(0.0);
        let consider = |t: f64, best_t: &mut f64, best_val: &mut f64| {
            let v = phi(t);
            if v < *best_val {
                *best_val = v;
                *best_t = t;
            }
        };
        for w in knots.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            consider(hi, &mut best_t, &mut best_val);
            if a > 0.0 {
                let mid = 0.5 * (lo + hi);
                let s = (di + mid).signum() - (dj - mid).signum();
                let t = (-(g + eps * s) / a).clamp(lo, hi);
                consider(t, &mut best_t, &mut best_val);
            }
        }
        if best_t <= 0.0 {
            return false;
        }
        let t = best_t;
        // snap onto knots exactly so sign tests stay clean
        let new_i = if t == -di { 0.0 } else if t == self.c - di { self.c } else { di + t };
        let new_j = if t == dj { 0.0 } else if t == dj + self.c { -self.c } else { dj - t };
        let (ti, tj) = (new_i - di, dj - new_j);
        self.delta[i] = new_i;
        self.delta[j] = new_j;
        for k in 0..self.delta.len() {
            self.grad[k] += ti * self.k[(k, i)] - tj * self.k[(k, j)];
        }
        true
    }

    /// Bias from free support vectors, else the midpoint of the KKT interval.
    fn bias(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for k in 0..self.delta.len() {
            let d = self.delta[k];
            if d > 0.0 && d < self.c {
                sum += -(self.grad[k] + self.eps);
                count += 1;
            } else if d < 0.0 && d > -self.c {
                sum += -(self.grad[k] - self.eps);
                count += 1;
            }
        }
        if count > 0 {
            return sum / count as f64;
        }
        match self.select() {
            Some((_, _, u, d)) => -0.5 * (u + d),
            None => 0.0,
        }
    }

    fn dual_objective(&self) -> f64 {
        let quad: f64 = self.delta.iter().zip(&self.grad).map(|(d, g)| d * g).sum();
        let lin: f64 = self.delta.iter().zip(self.y).map(|(d, y)| d * y).sum();
        let l1: f64 = self.delta.iter().map(|d| d.abs()).sum();
        -0.5 * quad + 0.5 * lin - self.eps * l1
    }

    /// Primal minus dual objective for the given bias.
    fn gap(&self, bias: f64) -> f64 {
        self.delta
            .iter()
            .zip(&self.grad)
            .map(|(&d, &g)| {
                // f_k − y_k = g + b
                let r = g + bias;
                self.c * (r.abs() - self.eps).max(0.0) + self.eps * d.abs() + d * r
            })
            .sum()
    }
}

pub fn train_svr_with(
    gram: &DMatrix<f64>,
    y: &[f64],
    c: f64,
    epsilon: f64,
    options: &SolverOptions,
) -> Result<SvrModel> {
    let n = y.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::invalid(format!(
            "gram is {}x{} but there are {n} targets",
            gram.nrows(),
            gram.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("no training samples"));
    }
    if !(c > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("need C > 0 and ε ≥ 0, got C={c}, ε={epsilon}")));
    }
    if !options.assume_psd && !is_psd(gram) {
        return Err(Error::invalid("gram matrix is not positive semidefinite"));
    }

    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let kkt_tol = options.kkt_tolerance * scale;
    let exact_tol = 1e-9 * (1.0 + scale);

    let mut st = State::new(gram, y, c, epsilon, vec![0.0; n]);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        let Some((i, j, up, down)) = st.select() else {
            converged = true;
            break;
        };
        let violation = down - up;
        if violation <= kkt_tol && (violation <= 0.0 || st.gap_ok(options.gap_tolerance)) {
            converged = true;
            break;
        }
        iterations += 1;
        if !st.step(i, j) {
            break;
        }
    }

    if !converged {
        // Exact KKT solve on the pattern found so far, else interior point,
        // else keep stepping from the better of the two with periodic polishing.
        let mut finished = st.finish(exact_tol, options.gap_tolerance);
        if finished.is_none() {
            let delta = ipm::solve(gram, y, c, epsilon, options.finishing_iterations);
            let rough = State::new(gram, y, c, epsilon, delta);
            finished = match rough.finish(exact_tol, options.gap_tolerance) {
                Some(p) => Some(p),
                None if rough.gap_ok(options.gap_tolerance) => Some(rough),
                None => {
                    if rough.dual_objective() > st.dual_objective() {
                        st = rough;
                    }
                    None
                }
            };
        }
        while finished.is_none() && iterations < MAX_PASSES {
            let Some((i, j, up, down)) = st.select() else { break };
            let violation = down - up;
            if violation <= kkt_tol && (violation <= 0.0 || st.gap_ok(options.gap_tolerance)) {
                finished = Some(st.clone());
                break;
            }
            iterations += 1;
            if !st.step(i, j) {
                break;
            }
            if iterations % POLISH_EVERY == 0 {
                finished = st.finish(exact_tol, options.gap_tolerance);
            }
        }
        match finished {
            Some(p) => st = p,
            None => {
                let b = st.bias();
                return Err(Error::SvrNotConverged { passes: iterations, gap: st.gap(b) });
            }
        }
    }

    let bias = st.bias();
    let support = (0..n).filter(|&k| st.delta[k] != 0.0).collect();
    Ok(SvrModel {
        dual_objective: st.dual_objective(),
        duality_gap: st.gap(bias),
        dual: st.delta,
        bias,
        support,
        c,
        epsilon,
        kernel: KernelKind::Linear,
        target_index: 0,
        training_ids: (0..n).collect(),
        iterations,
    })
}
