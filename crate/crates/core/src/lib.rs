//! Learning 1D two-fermion ground-state densities: Kohn-Sham data generation,
//! region-potential expansion bases, Rydberg-reservoir embeddings and ε-SVR
//! regression of the expansion coefficients.

pub mod error;
pub mod grid;
pub mod basis;
pub mod ks;
pub mod models;
pub mod pipeline;
pub mod reservoir;
pub mod svr;

pub use error::{Error, Result};
