use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the density-learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SCF did not converge after {iterations} iterations (last residual {residual:e})")]
    ScfNotConverged { iterations: usize, residual: f64 },

    #[error("SVR solver did not converge after {passes} passes (duality gap {gap:e})")]
    SvrNotConverged { passes: usize, gap: f64 },

    #[error("Gram-Schmidt collapsed at basis index {index} (residual norm {norm:e})")]
    GramSchmidtDegenerate { index: usize, norm: f64 },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by an iterative solver running out of budget.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::ScfNotConverged { .. } | Error::SvrNotConverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
