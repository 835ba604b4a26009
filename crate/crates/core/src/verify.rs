//! Independent verification of candidate solutions.
//!
//! Verification recomputes both constraint sides from scratch against the
//! original (untransformed) instance, so it shares no state with the solver
//! beyond the matrix types. The packing side is checked in the Loewner
//! order: `relax * P - sum x_j P_j` must be PSD, which one
//! eigendecomposition decides. The covering side is a coordinate-wise
//! minimum. Slacks are reported signed (negative means violated) together
//! with the tolerance they were compared against.

use crate::error::{Error, Result};
use crate::reduce::{MpcInstance, PositiveSdpInstance};
use crate::spectral::{sym_eigh, SymMatrix};

/// Slack tolerances are this fraction of the target scale (at least 1).
const VERIFY_REL_TOL: f64 = 1e-7;

/// Outcome of checking a point against a feasibility instance.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    /// `lambda_min(relax * P - sum x_j P_j)`; nonnegative (within
    /// `packing_tol`) means the packing constraint holds.
    pub packing_slack: f64,
    pub packing_tol: f64,
    /// `min_k (sum_j x_j C_j[k] - c_k)`; nonnegative (within
    /// `covering_tol`) means every covering constraint holds.
    pub covering_slack: f64,
    pub covering_tol: f64,
    pub ok: bool,
}

/// Outcome of checking a point against an objective instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub packing_slack: f64,
    pub packing_tol: f64,
    /// Achieved objective `c . x`.
    pub value: f64,
    pub ok: bool,
}

fn check_point(x: &[f64], m: usize) -> Result<()> {
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            what: "solution entry count",
            expected: m,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "solution entries",
        });
    }
    if x.iter().any(|v| *v < 0.0) {
        return Err(Error::NegativeEntry {
            what: "solution entries",
        });
    }
    Ok(())
}

fn check_relax(relax: f64) -> Result<()> {
    if !relax.is_finite() || relax < 1.0 {
        return Err(Error::InvalidConfig {
            what: format!("packing relaxation must be a finite factor >= 1, got {relax}"),
        });
    }
    Ok(())
}

fn packing_slack(
    packing: &[SymMatrix],
    pack_rhs: &SymMatrix,
    x: &[f64],
    relax: f64,
) -> Result<(f64, f64)> {
    let mut gap = pack_rhs.clone();
    gap.scale(relax);
    let tol = VERIFY_REL_TOL * gap.max_abs().max(1.0);
    for (p, &w) in packing.iter().zip(x) {
        gap.add_scaled(p, -w)?;
    }
    let slack = sym_eigh(&gap)?.lambda_min();
    Ok((slack, tol))
}

/// Checks `sum x_j P_j <= relax * P` and `sum x_j C_j >= C` for a
/// nonnegative point in original indexing. For solver output the natural
/// factor is `1 + 9 eps`; pass 1 to check against the unrelaxed target.
pub fn verify_solution(inst: &MpcInstance, x: &[f64], relax: f64) -> Result<VerifyReport> {
    check_point(x, inst.m())?;
    check_relax(relax)?;
    let (packing_slack, packing_tol) = packing_slack(inst.packing(), inst.pack_rhs(), x, relax)?;

    let targets = inst.cover_rhs().d();
    let mut covering_slack = f64::INFINITY;
    for (k, &t) in targets.iter().enumerate() {
        let got: f64 = inst
            .covering()
            .iter()
            .zip(x)
            .map(|(c, &w)| c.d()[k] * w)
            .sum();
        covering_slack = covering_slack.min(got - t);
    }
    let covering_tol = VERIFY_REL_TOL * targets.iter().fold(1.0f64, |acc, &t| acc.max(t));
    let ok = packing_slack >= -packing_tol && covering_slack >= -covering_tol;
    Ok(VerifyReport {
        packing_slack,
        packing_tol,
        covering_slack,
        covering_tol,
        ok,
    })
}

/// Checks `sum x_j P_j <= relax * P` for an objective instance and reports
/// the achieved value `c . x`.
pub fn verify_objective(
    inst: &PositiveSdpInstance,
    x: &[f64],
    relax: f64,
) -> Result<ObjectiveReport> {
    check_point(x, inst.m())?;
    check_relax(relax)?;
    let (slack, tol) = packing_slack(inst.packing(), inst.pack_rhs(), x, relax)?;
    let value = inst.objective().iter().zip(x).map(|(c, &w)| c * w).sum();
    Ok(ObjectiveReport {
        packing_slack: slack,
        packing_tol: tol,
        value,
        ok: slack >= -tol,
    })
}
