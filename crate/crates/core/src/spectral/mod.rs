//! Spectral kernel: symmetric matrix types, a deterministic dense
//! eigensolver, and shift-protected trace-exponential operations.
//!
//! Everything downstream (the solver iteration, verification, reductions)
//! consumes matrices only through this module, which pins down two contracts:
//!
//! - Determinism: identical inputs produce bitwise-identical outputs. The
//!   eigensolver uses a fixed cyclic sweep order and no randomised pivoting.
//! - Overflow safety: trace exponentials are always computed relative to the
//!   top eigenvalue, so ratios of them are meaningful even when the raw
//!   traces would overflow.

mod eigh;
mod matrix;
mod ops;

pub use eigh::{sym_eigh, EigDecomp};
pub use matrix::{trace_product, DiagMatrix, SymMatrix};
pub use ops::{
    ln_trace_exp, loewner_leq, matrix_exp, soft_max_eig, soft_min_eig, spectral_norm, trace_exp,
    trace_exp_product, trace_exp_product_diag, trace_exp_product_rel, PSD_REL_TOL,
};

pub(crate) use ops::require_psd;
