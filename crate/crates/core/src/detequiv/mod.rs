//! Deterministic equivalent of the extended-feature resolvent.
//!
//! The order parameters `(V, ν, b)` at a spectral point `z` solve a
//! dimension-free fixed point whose only inputs are the ratios `α = n/d`,
//! `β = p/d`, the spike vocabulary `{ζ^u_q, π_q}`, the activation and the link.
//! Every expectation over `κ ~ N(0, 1)` is a quadrature over one shared
//! [`CoefficientTable`].

mod blocks;
mod problem;
mod solver;
mod state;

pub use blocks::{assemble_extended, extended_equivalent, Blocks};
pub use problem::{Convention, TheoryProblem, CALIBRATED_CONVENTION};
pub use solver::{solve_fixed_point, SolverOptions};
pub use state::FixedPointState;
