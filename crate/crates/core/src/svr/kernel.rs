use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::MeasurementRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf { gamma: f64 },
    /// Linear kernel on reservoir measurements taken at `time` (μs).
    Pqk { time: f64 },
}

impl KernelKind {
    pub fn label(&self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf { .. } => "rbf",
            KernelKind::Pqk { .. } => "pqk",
        }
    }
}

/// Symmetric PSD kernel matrix with the kernel that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub kind: KernelKind,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    /// Principal sub-block on `idx`.
    pub fn select(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.entries[(idx[a], idx[b])])
    }

    /// Rows `rows`, columns `cols`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.entries[(rows[a], cols[b])])
    }
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = x.first() else {
        return Err(Error::invalid("kernel input has no rows"));
    };
    let d = first.len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("kernel input rows differ in length"));
    }
    Ok(d)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn symmetric(n: usize, f: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = f(i, j);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn gram_linear(x: &[Vec<f64>]) -> Result<GramMatrix> {
    check_rows(x)?;
    Ok(GramMatrix { entries: symmetric(x.len(), |i, j| dot(&x[i], &x[j])), kind: KernelKind::Linear })
}

/// `exp(−γ‖x_k − x_l‖²)`.
pub fn gram_rbf(x: &[Vec<f64>], gamma: f64) -> Result<GramMatrix> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("RBF gamma must be positive, got {gamma}")));
    }
    check_rows(x)?;
    let entries = symmetric(x.len(), |i, j| if i == j { 1.0 } else { (-gamma * sq_dist(&x[i], &x[j])).exp() });
    Ok(GramMatrix { entries, kind: KernelKind::Rbf { gamma } })
}

/// Dot products of measurement vectors; all rows must share one time.
pub fn gram_pqk(rows: &[&MeasurementRow]) -> Result<GramMatrix> {
    let Some(first) = rows.first() else {
        return Err(Error::invalid("PQK gram needs at least one measurement row"));
    };
    let time = first.time;
    if rows.iter().any(|r| r.time != time) {
        return Err(Error::invalid("PQK gram rows were measured at different times"));
    }
    let m: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
    check_rows(&m)?;
    Ok(GramMatrix { entries: symmetric(m.len(), |i, j| dot(&m[i], &m[j])), kind: KernelKind::Pqk { time } })
}

/// Kernel values between `left` rows and `right` rows for a vector kernel.
pub fn cross_kernel(kind: KernelKind, left: &[Vec<f64>], right: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(left.len(), right.len(), |i, j| match kind {
        KernelKind::Linear | KernelKind::Pqk { .. } => dot(&left[i], &right[j]),
        KernelKind::Rbf { gamma } => (-gamma * sq_dist(&left[i], &right[j])).exp(),
    })
}

/// Smallest eigenvalue ≥ −1e−8 · largest, and symmetric to 1e−12.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return false;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo >= -1e-8 * hi.abs().max(f64::MIN_POSITIVE)
}

/// RBF γ candidate, possibly derived from the training features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    Fixed(f64),
    /// `(N_f · σ²_avg)⁻¹` with `σ²_avg` the mean per-feature variance.
    InverseFeatureVariance,
    /// `N_f⁻¹`.
    InverseFeatureCount,
}
