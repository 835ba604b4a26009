//! Trace-exponential primitives and order comparisons on symmetric matrices.
//!
//! The solver never needs `exp(A)` at full scale; every quantity it consumes
//! is a ratio or logarithm of traces of exponentials. All operations here
//! therefore shift by the top eigenvalue before exponentiating
//! (`tr exp(A) = e^{lmax} sum_k e^{lambda_k - lmax}`), so intermediate values
//! stay bounded even when eigenvalues reach the hundreds.

use crate::error::{Error, Result};
use crate::spectral::eigh::{sym_eigh, EigDecomp};
use crate::spectral::matrix::{DiagMatrix, SymMatrix};

/// Relative tolerance for treating a matrix as PSD: the smallest eigenvalue
/// may round to `-PSD_REL_TOL * max(1, ||A||)` before the matrix is rejected.
pub const PSD_REL_TOL: f64 = 1e-9;

/// Checks the PSD gate on an already-computed decomposition.
pub(crate) fn require_psd(dec: &EigDecomp, context: &'static str) -> Result<()> {
    let norm = dec.lambda_max().abs().max(dec.lambda_min().abs());
    if dec.lambda_min() < -PSD_REL_TOL * norm.max(1.0) {
        return Err(Error::NotPsd {
            context,
            lambda_min: dec.lambda_min(),
        });
    }
    Ok(())
}

/// Spectral norm of a PSD matrix: its largest eigenvalue. Errors if the
/// matrix has a significantly negative eigenvalue.
pub fn spectral_norm(a: &SymMatrix) -> Result<f64> {
    let dec = sym_eigh(a)?;
    require_psd(&dec, "spectral_norm")?;
    Ok(dec.lambda_max().max(0.0))
}

/// `tr exp(A)`. Overflows to `+inf` only if the true value exceeds the f64
/// range; intermediates are shift-protected.
pub fn trace_exp(a: &SymMatrix) -> Result<f64> {
    Ok(ln_trace_exp(a)?.exp())
}

/// `ln tr exp(A)`, the soft upper eigenvalue bound. Never overflows.
pub fn ln_trace_exp(a: &SymMatrix) -> Result<f64> {
    Ok(sym_eigh(a)?.ln_trace_exp())
}

/// `tr(exp(A) B)` for PSD `B`, clamped at zero if roundoff makes it tiny
/// and negative.
pub fn trace_exp_product(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    let dec = sym_eigh(a)?;
    let bdec = sym_eigh(b)?;
    require_psd(&bdec, "trace_exp_product weight")?;
    Ok(dec.ln_trace_exp_product(b)?.exp())
}

/// `tr(exp(A) B)` for a nonnegative diagonal `B` (PSD by construction).
pub fn trace_exp_product_diag(a: &SymMatrix, b: &DiagMatrix) -> Result<f64> {
    trace_exp_product(a, &b.to_sym())
}

/// Relative form `tr(exp(A) B) / tr(exp(A))` for PSD `B`. Numerator and
/// denominator share the same eigenvalue shift, so the ratio is stable even
/// when both traces would overflow on their own.
pub fn trace_exp_product_rel(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    let dec = sym_eigh(a)?;
    let bdec = sym_eigh(b)?;
    require_psd(&bdec, "trace_exp_product_rel weight")?;
    let ln_num = dec.ln_trace_exp_product(b)?;
    let ln_den = dec.ln_trace_exp();
    Ok((ln_num - ln_den).exp())
}

/// Soft maximum eigenvalue `ln tr exp(A)`. For PSD `A` this dominates the
/// spectral norm: `soft_max_eig(A) >= ||A||`.
pub fn soft_max_eig(a: &SymMatrix) -> Result<f64> {
    ln_trace_exp(a)
}

/// Soft minimum eigenvalue `-ln tr exp(-A)`, a lower bound:
/// `soft_min_eig(A) <= lambda_min(A)` for any symmetric `A`.
pub fn soft_min_eig(a: &SymMatrix) -> Result<f64> {
    let mut neg = a.clone();
    neg.scale(-1.0);
    Ok(-ln_trace_exp(&neg)?)
}

/// Matrix exponential `exp(A) = V diag(e^lambda) V^T`. Intended for
/// diagnostics and property checks at moderate norms; entries overflow for
/// eigenvalues beyond ~700.
pub fn matrix_exp(a: &SymMatrix) -> Result<SymMatrix> {
    let dec = sym_eigh(a)?;
    let weights: Vec<f64> = dec.eigenvalues().iter().map(|l| l.exp()).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite {
            what: "matrix_exp spectral weights",
        });
    }
    dec.assemble(&weights)
}

/// Loewner order test `A <= B + tol*I`: true iff `lambda_min(B - A) >= -tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    let diff = b.sub(a)?;
    let dec = sym_eigh(&diff)?;
    Ok(dec.lambda_min() >= -tol)
}
