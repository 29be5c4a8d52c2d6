//! Uniform one-dimensional grids and the quadrature rules attached to them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Boundary {
    /// Open boundaries: nodes include both endpoints, wavefunctions vanish outside.
    Obc,
    /// Periodic boundaries: the node at `length` is identified with the node at 0.
    Pbc,
}

/// Uniform grid on `[0, length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    length: f64,
    num_points: usize,
    boundary: Boundary,
}

impl SpatialGrid {
    pub fn new(length: f64, num_points: usize, boundary: Boundary) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::invalid(format!("grid length must be positive, got {length}")));
        }
        if num_points < 3 {
            return Err(Error::invalid(format!(
                "grid needs at least 3 points, got {num_points}"
            )));
        }
        Ok(Self { length, num_points, boundary })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::Obc => self.length / (self.num_points - 1) as f64,
            Boundary::Pbc => self.length / self.num_points as f64,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.num_points).map(|i| self.x(i)).collect()
    }

    /// Quadrature weights: trapezoid under OBC, rectangle under PBC.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.num_points];
        if self.boundary == Boundary::Obc {
            w[0] = 0.5 * h;
            w[self.num_points - 1] = 0.5 * h;
        }
        w
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.num_points);
        let h = self.spacing();
        let sum: f64 = f.iter().sum();
        match self.boundary {
            Boundary::Obc => h * (sum - 0.5 * (f[0] + f[self.num_points - 1])),
            Boundary::Pbc => h * sum,
        }
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let h = self.spacing();
        let n = self.num_points;
        let sum: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        match self.boundary {
            Boundary::Obc => h * (sum - 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1])),
            Boundary::Pbc => h * sum,
        }
    }

    /// L1 distance `∫|a − b| dx`.
    pub fn l1_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
        self.integrate(&diff)
    }

    pub(crate) fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.num_points {
            return Err(Error::invalid(format!(
                "{what} has {len} entries, grid has {}",
                self.num_points
            )));
        }
        Ok(())
    }
}
