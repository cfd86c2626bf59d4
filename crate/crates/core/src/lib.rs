//! Spatial factor models for multivariate non-Gaussian data on a cubic mesh.

pub mod data;
pub mod engine;
pub mod error;
pub mod io;
pub mod kernels;
pub mod latent;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod outcomes;
pub mod rng;
pub mod samplers;
pub mod scalar;

pub use data::Dataset;
pub use error::{Error, Result};

/// Double-precision aliases for the scalar-generic core.
pub type Mat = linalg::Matrix<f64>;
pub type Cholesky = linalg::Cholesky<f64>;
