//! Identity-form solver: find x >= 0 with `sum x_j P_j <= (1+9eps) I` and
//! `sum x_j C_j >= I`, or certify that `sum x_j P_j <= I`, `sum x_j C_j >= I`
//! is infeasible.
//!
//! The iteration keeps a weight vector x and grows it multiplicatively. Each
//! round compares, per variable, how much the packing side would grow against
//! how much the covering side would grow (the `local` ratios, measured
//! through trace exponentials), freezes variables whose trade has become
//! worse than a slowly rising threshold `g`, and scales the step so the
//! active increment has spectral norm exactly `epsilon` on both sides. A
//! round where even the best variable trades worse than the aggregate ratio
//! is a proof of infeasibility.
//!
//! Covering coordinates that have already been driven above the target
//! threshold are truncated out of the working matrices, which is what keeps
//! the step size (and hence the iteration count) independent of the matrix
//! widths.

mod state;

pub use state::{potential_phi, solve, solve_streaming, Increment, Ratios, SolverState};

use crate::error::{Error, Result};
use crate::spectral::{require_psd, sym_eigh, DiagMatrix, SymMatrix};

/// Validated identity-form instance: PSD packing matrices with positive
/// spectral norm, nonnegative diagonal covering matrices, one of each per
/// variable.
#[derive(Debug, Clone)]
pub struct IdentityInstance {
    packing: Vec<SymMatrix>,
    covering: Vec<DiagMatrix>,
    pack_norms: Vec<f64>,
}

impl IdentityInstance {
    pub fn new(packing: Vec<SymMatrix>, covering: Vec<DiagMatrix>) -> Result<Self> {
        if packing.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "identity instance variable count",
                expected: 1,
                got: 0,
            });
        }
        if covering.len() != packing.len() {
            return Err(Error::DimensionMismatch {
                what: "covering matrix count",
                expected: packing.len(),
                got: covering.len(),
            });
        }
        let n_p = packing[0].n();
        let n_c = covering[0].n();
        let mut pack_norms = Vec::with_capacity(packing.len());
        for (j, p) in packing.iter().enumerate() {
            if p.n() != n_p {
                return Err(Error::DimensionMismatch {
                    what: "packing matrix order",
                    expected: n_p,
                    got: p.n(),
                });
            }
            let dec = sym_eigh(p)?;
            require_psd(&dec, "packing matrix")?;
            let norm = dec.lambda_max().max(0.0);
            if norm == 0.0 {
                return Err(Error::DegeneratePacking { index: j });
            }
            pack_norms.push(norm);
        }
        for c in &covering {
            if c.n() != n_c {
                return Err(Error::DimensionMismatch {
                    what: "covering matrix order",
                    expected: n_c,
                    got: c.n(),
                });
            }
        }
        Ok(Self {
            packing,
            covering,
            pack_norms,
        })
    }

    pub fn m(&self) -> usize {
        self.packing.len()
    }

    pub fn n_p(&self) -> usize {
        self.packing[0].n()
    }

    pub fn n_c(&self) -> usize {
        self.covering[0].n()
    }

    pub fn packing(&self) -> &[SymMatrix] {
        &self.packing
    }

    pub fn covering(&self) -> &[DiagMatrix] {
        &self.covering
    }

    /// Spectral norms of the packing matrices, computed at validation.
    pub fn pack_norms(&self) -> &[f64] {
        &self.pack_norms
    }
}

/// Iteration cap. `Auto` scales with the instance so it only fires on
/// numerical trouble, never on honest convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Auto,
    Fixed(u64),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iterations: Budget,
    /// Run per-iteration self-checks (potential monotonicity, smoothness of
    /// the step, cache consistency). Costs an extra eigendecomposition per
    /// iteration.
    pub check_invariants: bool,
    /// Collect per-iteration records in the returned run.
    pub trace: bool,
}

impl SolverConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
            return Err(Error::InvalidConfig {
                what: format!("epsilon must lie in (0, 1), got {epsilon}"),
            });
        }
        Ok(Self {
            epsilon,
            max_iterations: Budget::Auto,
            check_invariants: false,
            trace: false,
        })
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.max_iterations = budget;
        self
    }

    pub fn with_checks(mut self, on: bool) -> Self {
        self.check_invariants = on;
        self
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }
}

/// One completed iteration. The state columns (`lambda_min_c`, `norm_p`,
/// `phi`) are sampled after truncation and before the increment; the decision
/// columns (`g`, `global`, `min_local`, `argmin_j`, `delta`, `active_count`)
/// describe what the iteration did. `g`, `global` and `min_local` saturate to
/// `+inf` when their logarithms exceed the f64 exponent range; the `log_*`
/// mirrors stay finite and are the values the solver actually compared.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: u64,
    pub g: f64,
    pub global: f64,
    pub min_local: f64,
    pub argmin_j: usize,
    /// Smallest coordinate of the untruncated covering sum.
    pub lambda_min_c: f64,
    pub norm_p: f64,
    pub phi: f64,
    pub delta: f64,
    pub active_count: usize,
    pub log_g: f64,
    pub log_global: f64,
    pub log_min_local: f64,
    /// Soft eigenvalue bounds behind `phi`, kept for smoothness checks.
    pub imax_p: f64,
    pub imin_c: f64,
}

pub const TRACE_CSV_HEADER: &str =
    "iter,g,global,min_local,argmin_j,lambda_min_C,norm_P,phi,delta,active_count";

impl IterationRecord {
    /// Canonical CSV line (shortest round-trip float formatting, so repeated
    /// runs produce byte-identical files).
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.g,
            self.global,
            self.min_local,
            self.argmin_j,
            self.lambda_min_c,
            self.norm_p,
            self.phi,
            self.delta,
            self.active_count
        )
    }
}

/// Renders a full trace as CSV text with the canonical header.
pub fn trace_csv(records: &[IterationRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Receives records as iterations complete (used by the CLI to stream CSV).
pub trait TraceSink {
    fn record(&mut self, rec: &IterationRecord);
}

impl TraceSink for Vec<IterationRecord> {
    fn record(&mut self, rec: &IterationRecord) {
        self.push(rec.clone());
    }
}

/// Sink that drops everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _rec: &IterationRecord) {}
}

/// Scaled point returned on success, with its measured guarantees
/// (recomputed against the untruncated inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePoint {
    pub x: Vec<f64>,
    /// `|| sum_j x_j P_j ||`, guaranteed <= 1 + 9 epsilon.
    pub packing_norm: f64,
    /// `lambda_min(sum_j x_j C_j)` over the original covering matrices,
    /// guaranteed >= 1.
    pub covering_min: f64,
    pub iterations: u64,
    pub phases: u64,
}

/// Witness data from the round that proved infeasibility: even the most
/// favourable variable's packing/covering trade exceeded the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibleWitness {
    pub iteration: u64,
    pub g: f64,
    pub global: f64,
    pub min_local: f64,
    pub argmin_j: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverOutcome {
    Feasible(FeasiblePoint),
    Infeasible(InfeasibleWitness),
}

/// Outcome plus the collected trace (empty unless `config.trace` was set).
#[derive(Debug, Clone)]
pub struct SolveRun {
    pub outcome: SolverOutcome,
    pub trace: Vec<IterationRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_out_of_range_epsilon() {
        assert!(SolverConfig::new(0.0).is_err());
        assert!(SolverConfig::new(1.0).is_err());
        assert!(SolverConfig::new(-0.1).is_err());
        assert!(SolverConfig::new(f64::NAN).is_err());
        assert!(SolverConfig::new(0.5).is_ok());
    }

    #[test]
    fn instance_validation_catches_defects() {
        let p = SymMatrix::identity(2);
        let c = DiagMatrix::new(vec![1.0, 1.0]).unwrap();
        assert!(IdentityInstance::new(vec![], vec![]).is_err());
        assert!(IdentityInstance::new(vec![p.clone()], vec![]).is_err());
        // Zero packing matrix: variable is unconstrained on the packing side.
        assert!(matches!(
            IdentityInstance::new(vec![SymMatrix::zeros(2)], vec![c.clone()]),
            Err(Error::DegeneratePacking { index: 0 })
        ));
        // Indefinite packing matrix.
        let indef = SymMatrix::from_diag(&[1.0, -1.0]).unwrap();
        assert!(matches!(
            IdentityInstance::new(vec![indef], vec![c.clone()]),
            Err(Error::NotPsd { .. })
        ));
        assert!(IdentityInstance::new(vec![p], vec![c]).is_ok());
    }

    #[test]
    fn trace_csv_has_pinned_header_and_one_line_per_record() {
        let rec = IterationRecord {
            iter: 1,
            g: 2.0,
            global: 2.0,
            min_local: 2.0,
            argmin_j: 0,
            lambda_min_c: 0.5,
            norm_p: 1.0,
            phi: 0.25,
            delta: 0.1,
            active_count: 1,
            log_g: 2f64.ln(),
            log_global: 2f64.ln(),
            log_min_local: 2f64.ln(),
            imax_p: 1.0,
            imin_c: 0.5,
        };
        let csv = trace_csv(&[rec]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,g,global,min_local,argmin_j,lambda_min_C,norm_P,phi,delta,active_count"
        );
        assert_eq!(lines.next().unwrap(), "1,2,2,2,0,0.5,1,0.25,0.1,1");
        assert!(lines.next().is_none());
    }
}
