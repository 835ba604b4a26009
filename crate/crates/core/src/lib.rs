//! Solver library for mixed packing and covering semidefinite programs.
//!
//! The central problem: given symmetric PSD packing matrices P_1..P_m, a PSD
//! target P, nonnegative diagonal covering matrices C_1..C_m and a diagonal
//! target C, find x >= 0 with
//!
//! ```text
//!   sum_j x_j P_j <= (1 + O(eps)) P    and    sum_j x_j C_j >= C
//! ```
//!
//! or certify that no x satisfies the exact system. The engine is a
//! width-independent multiplicative-weights iteration on the identity-form
//! problem (P = I, C = I); [`reduce`] maps general instances onto it and maps
//! solutions back. Optimisation variants (maximise `gamma` with covering
//! target `gamma * C`, and positive packing SDPs with a linear objective) are
//! layered on top via binary search.
//!
//! Module map:
//! - [`spectral`]: dense symmetric eigensolver plus the trace-exponential
//!   primitives (soft eigenvalue bounds) everything else is built on.
//! - [`solver`]: the identity-form iteration with per-iteration diagnostics.
//! - [`reduce`]: normalisation of general instances, feasibility (`solve_q1`),
//!   covering maximisation (`solve_q2`), positive SDP objective (`solve_q3`).
//! - [`verify`]: independent feasibility checking of candidate solutions.
//! - [`gen`]: seeded instance generators and a brute-force LP oracle for
//!   cross-checking the optimisation path on tiny diagonal instances.

pub mod error;
pub mod gen;
pub mod reduce;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
