//! Crate-wide error type.
//!
//! Everything that can go wrong is surfaced as a variant here rather than a
//! panic: numerical failures (eigensolver non-convergence), contract
//! violations on inputs (non-PSD matrices, dimension mismatches), and solver
//! diagnostics (budget exhaustion, internal invariant violations). The solver
//! treats "infeasible" as a successful verdict, not an error.

use crate::solver::IterationRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("eigensolver did not converge for a {n}x{n} matrix (off-diagonal residue {off_diagonal:.3e})")]
    EigenNonConvergence { n: usize, off_diagonal: f64 },

    #[error("{context}: matrix is not PSD within tolerance (lambda_min = {lambda_min:.6e})")]
    NotPsd {
        context: &'static str,
        lambda_min: f64,
    },

    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what}: entries must be finite")]
    NonFinite { what: &'static str },

    #[error("{what}: entries must be nonnegative")]
    NegativeEntry { what: &'static str },

    #[error("packing matrix {index} has zero spectral norm; the variable is unconstrained on the packing side")]
    DegeneratePacking { index: usize },

    #[error("invalid solver configuration: {what}")]
    InvalidConfig { what: String },

    #[error("invalid generator spec: {what}")]
    InvalidGenSpec { what: String },

    /// The iteration budget ran out before the loop terminated. This signals
    /// numerical trouble (or an adversarial instance), never a verdict. The
    /// trace collected so far is attached when the caller asked for one, so
    /// the run can still be inspected.
    #[error("iteration budget exhausted after {iterations} iterations ({phases} phases)")]
    BudgetExhausted {
        iterations: u64,
        phases: u64,
        trace: Vec<IterationRecord>,
    },

    /// A runtime self-check failed while `check_invariants` was enabled.
    #[error("solver invariant violated at iteration {iteration}: {what}")]
    InvariantViolation { iteration: u64, what: String },

    /// The loop terminated but the returned point failed final verification
    /// against the untruncated input matrices. Indicates a numerical problem.
    #[error(
        "terminated point failed verification (packing norm {packing_norm:.9}, covering min {covering_min:.9})"
    )]
    GuaranteeViolation {
        packing_norm: f64,
        covering_min: f64,
    },

    /// Covering maximisation found no finite optimum within the doubling cap.
    #[error("covering objective is unbounded (still feasible at gamma = 2^60)")]
    Unbounded,

    #[error("oracle does not support this instance: {what}")]
    UnsupportedOracle { what: String },
}
