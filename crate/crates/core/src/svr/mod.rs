//! ε-insensitive support-vector regression on precomputed Gram matrices.

mod kernel;
mod search;
mod ipm;
mod smo;

pub use kernel::{
    cross_kernel, gram_linear, gram_pqk, gram_rbf, is_psd, GammaSpec, GramMatrix, KernelKind,
};
pub use search::{
    fold_indices, grid_search, resolve_gammas, train_multi, CvScore, HyperparameterGrid, Selection,
};
pub use smo::{predict, train_svr, train_svr_with, SolverOptions, SvrModel};
