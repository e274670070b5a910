//! Deterministic equivalents for information-plus-noise random matrices
//! `Σ = Y + A` with a variance profile, and Monte Carlo checks against them.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod corpus;
pub mod error;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod quadrature;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use model::ModelSpec;
pub use solver::{EquivalentSolution, SolverConfig};
