//! Numerical laboratory for two-layer networks trained with one large
//! gradient step followed by a ridge readout on Gaussian single-index data.
//!
//! The crate has two halves. [`simulate`] runs the finite-size pipeline and
//! measures spectra, resolvent traces, order parameters and test errors.
//! [`detequiv`], [`spectrum`] and [`generror`] solve the dimension-free
//! fixed point of the deterministic equivalent and turn it into a bulk
//! density and an asymptotic generalization error.

pub mod activation;
pub mod artifacts;
pub mod cli;
pub mod detequiv;
pub mod error;
pub mod generror;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod spectrum;

pub use activation::Pointwise;
pub use error::{Error, Result};
pub use faer::c64;
pub use model::{ExperimentConfig, VocabularySpec};
