//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An experiment or vocabulary configuration violates a structural constraint.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A quadrature rule could not be constructed or an integral is unreliable.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// The self-consistent equations did not reach the requested tolerance.
    #[error(
        "fixed point did not converge at z = {re}{im:+}i: residual {residual:.3e} after {iterations} iterations"
    )]
    NotConverged {
        re: f64,
        im: f64,
        residual: f64,
        iterations: usize,
    },

    /// A matrix that must be inverted is numerically singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A dense factorization failed.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// A cached or serialized artifact is malformed.
    #[error("malformed artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
