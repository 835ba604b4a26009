//! Solver state and the iteration loop.
//!
//! Loop skeleton, per round:
//!
//! 1. ratios: per-variable `local_j = tr(exp(sumP) P_j) / tr(exp(-sumC) C_j)`
//!    and the aggregate `global = tr exp(sumP) / tr exp(-sumC)`, all handled
//!    in log space;
//! 2. phase update: raise the freezing threshold `g` to `global` when even
//!    the best variable exceeds `g (1+eps)`;
//! 3. infeasibility test: `min_j local_j > global` proves there is no
//!    feasible point, because some convex combination of variables must
//!    always trade at or below the aggregate ratio;
//! 4. truncation: covering coordinates whose accumulated sum passed the
//!    target `threshold` are frozen out of the working matrices (they are
//!    done; keeping them would shrink the step size);
//! 5. increment: scale the active variables so the added packing/covering
//!    mass has spectral norm exactly `eps`, and add it.
//!
//! The loop ends when every covering coordinate has reached `threshold`;
//! dividing x by `threshold` then yields the guaranteed point.
//!
//! All soft covering quantities (`tr exp(-sumC)` and friends) are evaluated
//! over the still-active coordinates only, matching the convention that
//! truncation restricts the space rather than inserting zero eigenvalues.
//! This is what makes both the potential argument and the termination test
//! behave: a truncated coordinate is "at least threshold", not "zero".

use crate::error::{Error, Result};
use crate::solver::{
    Budget, FeasiblePoint, IdentityInstance, InfeasibleWitness, IterationRecord, NullSink,
    SolveRun, SolverConfig, SolverOutcome, TraceSink,
};
use crate::spectral::{ln_trace_exp, sym_eigh, trace_product, SymMatrix};

/// Caches are rebuilt from scratch this often to stop incremental drift.
const REFRESH_INTERVAL: u32 = 64;

/// Absolute slack for the potential and smoothness self-checks.
const SMOOTHNESS_SLACK: f64 = 1e-8;

/// Relative slack on monotonicity self-checks (log-space absolute).
const MONOTONE_SLACK: f64 = 1e-9;

/// Tolerance on the final verification of the returned point.
const FINAL_TOL: f64 = 1e-7;

/// True when the claimed bound `a <= b` fails. A NaN on either side counts
/// as a failure: self-checks must fire on NaN rather than let an `a > b`
/// comparison wave it through.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn refutes_le(a: f64, b: f64) -> bool {
    !(a <= b)
}

/// True when the claimed bound `a >= b` fails (NaN counts as failure).
fn refutes_ge(a: f64, b: f64) -> bool {
    refutes_le(b, a)
}

/// Per-variable and aggregate packing/covering trade ratios for the current
/// x, in log space. `log_local[j] = +inf` encodes a variable whose covering
/// contribution on the still-active coordinates is zero.
#[derive(Debug, Clone)]
pub struct Ratios {
    pub log_local: Vec<f64>,
    pub log_global: f64,
    pub min_log_local: f64,
    pub argmin_j: usize,
    /// Soft max eigenvalue of the packing sum (`ln tr exp(sumP)`).
    pub imax_p: f64,
    /// Soft min eigenvalue of the truncated covering sum.
    pub imin_c: f64,
    /// Largest eigenvalue of the cached packing sum.
    pub pack_lambda_max: f64,
}

/// A chosen multiplicative step: `x_j += delta * x_j` on the active set.
#[derive(Debug, Clone)]
pub struct Increment {
    pub delta: f64,
    pub active: Vec<bool>,
    pub active_count: usize,
    /// `sum_{j active} x_j P_j`, the packing mass the step will add
    /// (before scaling by delta).
    pub pack_sum: SymMatrix,
    /// Same for the truncated covering side (active coordinates only).
    pub cov_cur: Vec<f64>,
    /// Untruncated covering mass, for reporting sums.
    pub cov_orig: Vec<f64>,
    /// max(||pack_sum||, ||cov_cur||); delta = eps / max_norm.
    pub max_norm: f64,
}

pub struct SolverState<'a> {
    inst: &'a IdentityInstance,
    epsilon: f64,
    /// (1 + eps)^3, the factor tying packing growth to covering growth.
    cube: f64,
    ln_one_plus_eps: f64,
    /// Strict comparisons use `a > b + guard` in log space, so ties within
    /// a relative 1e-12 count as equal. Keeps verdicts stable under roundoff.
    guard: f64,
    /// Covering level the loop drives every coordinate to (called N in the
    /// classic presentations): (||sumP at init|| + 2 ln n + ln m) / eps.
    threshold: f64,
    x: Vec<f64>,
    x_init: Vec<f64>,
    /// Covering coordinates still below threshold (not yet truncated).
    mask: Vec<bool>,
    sum_p: SymMatrix,
    /// Truncated covering sum; masked entries are zero and excluded from
    /// every soft quantity.
    sum_c: Vec<f64>,
    /// Untruncated covering sum, kept for reporting and final verification.
    sum_c_orig: Vec<f64>,
    log_g: Option<f64>,
    iterations: u64,
    phases: u64,
    since_refresh: u32,
    check: bool,
    prev_phi: f64,
    prev_log_local: Vec<f64>,
}

impl<'a> SolverState<'a> {
    pub fn init(inst: &'a IdentityInstance, config: &SolverConfig) -> Result<Self> {
        if !config.epsilon.is_finite() || config.epsilon <= 0.0 || config.epsilon >= 1.0 {
            return Err(Error::InvalidConfig {
                what: format!("epsilon must lie in (0, 1), got {}", config.epsilon),
            });
        }
        let m = inst.m();
        let eps = config.epsilon;
        let x: Vec<f64> = inst
            .pack_norms()
            .iter()
            .map(|&norm| 1.0 / (m as f64 * norm))
            .collect();
        let sum_p = pack_sum(inst, &x, None)?;
        let (sum_c, _) = cov_sum(inst, &x, None);
        let init_norm = sym_eigh(&sum_p)?.lambda_max().max(0.0);
        let n = inst.n_p().max(inst.n_c()) as f64;
        let threshold = (init_norm + 2.0 * n.ln() + (m as f64).ln()) / eps;
        let cube = (1.0 + eps).powi(3);
        let mask = vec![true; inst.n_c()];
        let prev_phi = ln_trace_exp(&sum_p)? - cube * (-ln_sum_exp_neg(&sum_c, &mask));
        let state = Self {
            inst,
            epsilon: eps,
            cube,
            ln_one_plus_eps: eps.ln_1p(),
            guard: (1e-12f64).ln_1p(),
            threshold,
            x_init: x.clone(),
            x,
            mask,
            sum_p,
            sum_c_orig: sum_c.clone(),
            sum_c,
            log_g: None,
            iterations: 0,
            phases: 0,
            since_refresh: 0,
            check: config.check_invariants,
            prev_phi,
            prev_log_local: vec![f64::NEG_INFINITY; m],
        };
        if state.check {
            // Initial potential bound: imax <= ln n_p + ||sumP|| <= ln n_p + 1
            // and -imin <= ln n_c, so phi <= ln n_p + 1 + (1+eps)^3 ln n_c.
            let bound = (inst.n_p() as f64).ln() + 1.0 + cube * (inst.n_c() as f64).ln();
            if refutes_le(prev_phi, bound + 1e-9) {
                return Err(Error::InvariantViolation {
                    iteration: 0,
                    what: format!("initial potential {prev_phi} exceeds bound {bound}"),
                });
            }
        }
        Ok(state)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn phases(&self) -> u64 {
        self.phases
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn log_g(&self) -> Option<f64> {
        self.log_g
    }

    /// Smallest still-active coordinate of the truncated covering sum;
    /// `+inf` once everything is truncated. The loop runs while this is
    /// below `threshold`.
    pub fn loop_lambda_min(&self) -> f64 {
        let mut min = f64::INFINITY;
        for (k, &d) in self.sum_c.iter().enumerate() {
            if self.mask[k] && d < min {
                min = d;
            }
        }
        min
    }

    fn strictly_above(&self, a: f64, b: f64) -> bool {
        a > b + self.guard
    }

    /// Current potential `imax(sumP) - (1+eps)^3 imin(sumC)`, evaluated on
    /// the truncated covering sum.
    pub fn potential(&self) -> Result<f64> {
        let imax = ln_trace_exp(&self.sum_p)?;
        Ok(imax - self.cube * (-ln_sum_exp_neg(&self.sum_c, &self.mask)))
    }

    /// Step 1: the trade ratios at the current x. One eigendecomposition of
    /// the packing sum; the covering side works directly on diagonals.
    pub fn compute_ratios(&self) -> Result<Ratios> {
        let dec = sym_eigh(&self.sum_p)?;
        let (e_shift, lmax) = dec.exp_shifted();
        let imax_p = dec.ln_trace_exp();
        let ln_den_global = ln_sum_exp_neg(&self.sum_c, &self.mask);
        let log_global = imax_p - ln_den_global;
        let m = self.inst.m();
        let mut log_local = Vec::with_capacity(m);
        let mut min_log_local = f64::INFINITY;
        let mut argmin_j = 0;
        for j in 0..m {
            let num = trace_product(&e_shift, &self.inst.packing()[j])?.max(0.0);
            let ln_num = lmax + num.ln();
            let ln_den =
                ln_sum_exp_neg_weighted(&self.sum_c, &self.mask, self.inst.covering()[j].d());
            // Zero covering contribution makes the variable useless for the
            // remaining coordinates: local_j = +inf, sticky for the rest of
            // the run because the active set only shrinks.
            let ll = if ln_den == f64::NEG_INFINITY {
                f64::INFINITY
            } else {
                ln_num - ln_den
            };
            if ll < min_log_local {
                min_log_local = ll;
                argmin_j = j;
            }
            log_local.push(ll);
        }
        Ok(Ratios {
            log_local,
            log_global,
            min_log_local,
            argmin_j,
            imax_p,
            imin_c: -ln_den_global,
            pack_lambda_max: dec.lambda_max(),
        })
    }

    /// Step 2: raise the freezing threshold when even the best variable
    /// trades above `g (1+eps)`. Returns the previous value if it advanced.
    pub fn update_phase(&mut self, ratios: &Ratios) -> Option<Option<f64>> {
        let advance = match self.log_g {
            None => true,
            Some(lg) => self.strictly_above(ratios.min_log_local, lg + self.ln_one_plus_eps),
        };
        if advance {
            let old = self.log_g;
            self.log_g = Some(ratios.log_global);
            self.phases += 1;
            Some(old)
        } else {
            None
        }
    }

    /// Step 3: if the best trade exceeds the aggregate ratio, no nonnegative
    /// combination can satisfy both sides; report the witness.
    pub fn check_infeasible(&self, ratios: &Ratios, iteration: u64) -> Option<InfeasibleWitness> {
        if self.strictly_above(ratios.min_log_local, ratios.log_global) {
            Some(InfeasibleWitness {
                iteration,
                g: self.log_g.map(f64::exp).unwrap_or(f64::NAN),
                global: ratios.log_global.exp(),
                min_local: ratios.min_log_local.exp(),
                argmin_j: ratios.argmin_j,
            })
        } else {
            None
        }
    }

    /// Step 4: freeze covering coordinates that crossed the threshold.
    /// Returns how many were newly truncated.
    pub fn truncate_covering(&mut self, iteration: u64) -> Result<usize> {
        let before = if self.check {
            Some(ln_sum_exp_neg(&self.sum_c, &self.mask))
        } else {
            None
        };
        let mut newly = 0;
        for k in 0..self.mask.len() {
            if self.mask[k] && self.sum_c[k] > self.threshold {
                self.mask[k] = false;
                self.sum_c[k] = 0.0;
                newly += 1;
            }
        }
        if let Some(before) = before {
            if newly > 0 {
                let after = ln_sum_exp_neg(&self.sum_c, &self.mask);
                // Truncation removes positive terms from tr exp(-sumC), so
                // the aggregate ratio can only move up.
                if refutes_le(after, before + 1e-12) {
                    return Err(Error::InvariantViolation {
                        iteration,
                        what: format!("covering trace grew under truncation ({before} -> {after})"),
                    });
                }
            }
        }
        Ok(newly)
    }

    /// Step 5a: pick the active set and the step size. The step is scaled so
    /// the added mass has spectral norm exactly eps on the larger side.
    pub fn choose_increment(&self, ratios: &Ratios, iteration: u64) -> Result<Increment> {
        let lg = self.log_g.ok_or_else(|| Error::InvariantViolation {
            iteration,
            what: "increment requested before any phase threshold was set".into(),
        })?;
        let cutoff = lg + self.ln_one_plus_eps;
        let active: Vec<bool> = ratios
            .log_local
            .iter()
            .map(|&ll| !self.strictly_above(ll, cutoff))
            .collect();
        let active_count = active.iter().filter(|a| **a).count();
        if active_count == 0 {
            return Err(Error::InvariantViolation {
                iteration,
                what: "active set is empty after a survived phase update".into(),
            });
        }
        let filter = Some(&active);
        // With everyone active the packing side of the step is the cached
        // sum itself, whose decomposition compute_ratios already did.
        let (pack_sum, pack_norm) = if active_count == self.inst.m() {
            (self.sum_p.clone(), ratios.pack_lambda_max.max(0.0))
        } else {
            let ps = pack_sum(self.inst, &self.x, filter)?;
            let norm = sym_eigh(&ps)?.lambda_max().max(0.0);
            (ps, norm)
        };
        let (cov_orig, _) = cov_sum(self.inst, &self.x, filter);
        let mut cov_cur = cov_orig.clone();
        for (k, c) in cov_cur.iter_mut().enumerate() {
            if !self.mask[k] {
                *c = 0.0;
            }
        }
        let cov_norm = cov_cur
            .iter()
            .enumerate()
            .filter(|(k, _)| self.mask[*k])
            .fold(0.0f64, |acc, (_, &v)| acc.max(v));
        let max_norm = pack_norm.max(cov_norm);
        if !max_norm.is_finite() || max_norm == 0.0 {
            return Err(Error::InvariantViolation {
                iteration,
                what: "active increment has zero spectral norm on both sides".into(),
            });
        }
        Ok(Increment {
            delta: self.epsilon / max_norm,
            active,
            active_count,
            pack_sum,
            cov_cur,
            cov_orig,
            max_norm,
        })
    }

    /// Step 5b: apply `x_j += delta x_j` on the active set and maintain the
    /// cached sums incrementally, with periodic full rebuilds.
    pub fn apply_increment(&mut self, inc: &Increment, iteration: u64) -> Result<()> {
        if self.check {
            let measured = inc.delta * inc.max_norm;
            if (measured - self.epsilon).abs() > 1e-12 * self.epsilon {
                return Err(Error::InvariantViolation {
                    iteration,
                    what: format!(
                        "increment norm {measured} differs from eps {}",
                        self.epsilon
                    ),
                });
            }
        }
        for (j, xj) in self.x.iter_mut().enumerate() {
            if inc.active[j] {
                *xj += inc.delta * *xj;
            }
        }
        self.sum_p.add_scaled(&inc.pack_sum, inc.delta)?;
        for k in 0..self.sum_c.len() {
            if self.mask[k] {
                self.sum_c[k] += inc.delta * inc.cov_cur[k];
            }
            self.sum_c_orig[k] += inc.delta * inc.cov_orig[k];
        }
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh_caches(iteration)?;
        }
        Ok(())
    }

    /// Rebuilds the cached sums from x, verifying the incremental versions
    /// had not drifted when self-checks are on.
    fn refresh_caches(&mut self, iteration: u64) -> Result<()> {
        let fresh_p = pack_sum(self.inst, &self.x, None)?;
        let (fresh_c_orig, _) = cov_sum(self.inst, &self.x, None);
        let mut fresh_c = fresh_c_orig.clone();
        for (k, c) in fresh_c.iter_mut().enumerate() {
            if !self.mask[k] {
                *c = 0.0;
            }
        }
        if self.check {
            let scale_p = fresh_p.max_abs().max(1.0);
            let drift_p = self.sum_p.sub(&fresh_p)?.max_abs();
            let drift_c = self
                .sum_c
                .iter()
                .zip(&fresh_c)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let scale_c = fresh_c.iter().fold(1.0f64, |acc, &v| acc.max(v.abs()));
            if drift_p > 1e-9 * scale_p || drift_c > 1e-9 * scale_c {
                return Err(Error::InvariantViolation {
                    iteration,
                    what: format!("cache drift exceeded tolerance (P {drift_p}, C {drift_c})"),
                });
            }
        }
        self.sum_p = fresh_p;
        self.sum_c = fresh_c;
        self.sum_c_orig = fresh_c_orig;
        self.since_refresh = 0;
        Ok(())
    }

    /// Runs one full iteration. `Ok(None)` means the round proved
    /// infeasibility (the witness is embedded in the outcome).
    fn step(&mut self, sink: &mut dyn TraceSink) -> Result<Option<InfeasibleWitness>> {
        self.iterations += 1;
        let iter = self.iterations;

        let ratios = self.compute_ratios()?;
        if self.check {
            self.check_local_monotone(&ratios, iter)?;
        }
        let advanced = self.update_phase(&ratios);
        if self.check {
            self.check_threshold_bounds(&ratios, iter)?;
        }
        if let Some(witness) = self.check_infeasible(&ratios, iter) {
            return Ok(Some(witness));
        }
        if self.check {
            if let Some(Some(old_lg)) = advanced {
                // Surviving phase advances jump by at least a (1+eps) factor:
                // new g = global >= min_local > old g (1+eps).
                let new_lg = self.log_g.expect("just advanced");
                if refutes_ge(new_lg, old_lg + self.ln_one_plus_eps - MONOTONE_SLACK) {
                    return Err(Error::InvariantViolation {
                        iteration: iter,
                        what: format!(
                            "phase threshold advanced by less than (1+eps): {old_lg} -> {new_lg}"
                        ),
                    });
                }
            }
        }
        self.truncate_covering(iter)?;

        let imin_now = -ln_sum_exp_neg(&self.sum_c, &self.mask);
        let phi = ratios.imax_p - self.cube * imin_now;
        if self.check && refutes_le(phi, self.prev_phi + SMOOTHNESS_SLACK) {
            return Err(Error::InvariantViolation {
                iteration: iter,
                what: format!("potential increased: {} -> {phi}", self.prev_phi),
            });
        }
        let lambda_min_orig = self
            .sum_c_orig
            .iter()
            .fold(f64::INFINITY, |acc, &v| acc.min(v));

        let inc = self.choose_increment(&ratios, iter)?;
        self.apply_increment(&inc, iter)?;

        if self.check {
            self.check_smoothness(&ratios, imin_now, iter)?;
            for (j, (&xj, &x0)) in self.x.iter().zip(&self.x_init).enumerate() {
                if xj < x0 {
                    return Err(Error::InvariantViolation {
                        iteration: iter,
                        what: format!("x[{j}] fell below its initial value"),
                    });
                }
            }
        }
        self.prev_phi = phi;

        let log_g = self.log_g.expect("set during update_phase");
        sink.record(&IterationRecord {
            iter,
            g: log_g.exp(),
            global: ratios.log_global.exp(),
            min_local: ratios.min_log_local.exp(),
            argmin_j: ratios.argmin_j,
            lambda_min_c: lambda_min_orig,
            norm_p: ratios.pack_lambda_max,
            phi,
            delta: inc.delta,
            active_count: inc.active_count,
            log_g,
            log_global: ratios.log_global,
            log_min_local: ratios.min_log_local,
            imax_p: ratios.imax_p,
            imin_c: imin_now,
        });
        Ok(None)
    }

    /// Growth of the soft packing bound must stay within (1+eps)^3 of the
    /// growth of the soft covering bound, per increment. This is the
    /// inequality that drives the whole termination argument.
    fn check_smoothness(&self, ratios: &Ratios, imin_before: f64, iteration: u64) -> Result<()> {
        let imax_after = sym_eigh(&self.sum_p)?.ln_trace_exp();
        let imin_after = -ln_sum_exp_neg(&self.sum_c, &self.mask);
        let d_imax = imax_after - ratios.imax_p;
        let d_imin = imin_after - imin_before;
        if refutes_le(d_imax, self.cube * d_imin + SMOOTHNESS_SLACK) {
            return Err(Error::InvariantViolation {
                iteration,
                what: format!(
                    "increment smoothness violated: d_imax {d_imax} > (1+eps)^3 d_imin {}",
                    self.cube * d_imin
                ),
            });
        }
        Ok(())
    }

    fn check_local_monotone(&mut self, ratios: &Ratios, iteration: u64) -> Result<()> {
        for (j, (&prev, &cur)) in self
            .prev_log_local
            .iter()
            .zip(&ratios.log_local)
            .enumerate()
        {
            let ok = if prev == f64::INFINITY {
                cur == f64::INFINITY
            } else {
                cur >= prev - MONOTONE_SLACK
            };
            if !ok {
                return Err(Error::InvariantViolation {
                    iteration,
                    what: format!("local ratio {j} decreased: {prev} -> {cur}"),
                });
            }
        }
        self.prev_log_local.copy_from_slice(&ratios.log_local);
        Ok(())
    }

    fn check_threshold_bounds(&self, ratios: &Ratios, iteration: u64) -> Result<()> {
        let lg = self.log_g.expect("checked after update_phase");
        let n = self.threshold;
        if refutes_ge(lg, -n - 1e-6) || refutes_le(lg, 13.0 * n + 1e-6) {
            return Err(Error::InvariantViolation {
                iteration,
                what: format!("phase threshold log {lg} left its certified range [-N, 13N]"),
            });
        }
        if refutes_ge(ratios.log_global, lg - MONOTONE_SLACK) {
            return Err(Error::InvariantViolation {
                iteration,
                what: format!(
                    "aggregate ratio {} fell below the phase threshold {lg}",
                    ratios.log_global
                ),
            });
        }
        Ok(())
    }

    /// Scales x by the threshold and verifies the guarantees against the
    /// untruncated inputs.
    fn finish(self) -> Result<FeasiblePoint> {
        let x: Vec<f64> = self.x.iter().map(|v| v / self.threshold).collect();
        let final_p = pack_sum(self.inst, &x, None)?;
        let packing_norm = sym_eigh(&final_p)?.lambda_max().max(0.0);
        let (final_c, _) = cov_sum(self.inst, &x, None);
        let covering_min = final_c.iter().fold(f64::INFINITY, |acc, &v| acc.min(v));
        let cap = 1.0 + 9.0 * self.epsilon;
        if covering_min < 1.0 - FINAL_TOL || packing_norm > cap + FINAL_TOL {
            return Err(Error::GuaranteeViolation {
                packing_norm,
                covering_min,
            });
        }
        Ok(FeasiblePoint {
            x,
            packing_norm,
            covering_min,
            iterations: self.iterations,
            phases: self.phases,
        })
    }

    #[cfg(test)]
    pub(crate) fn test_set_x(&mut self, x: Vec<f64>) {
        assert_eq!(x.len(), self.inst.m());
        self.x = x;
        self.sum_p = pack_sum(self.inst, &self.x, None).unwrap();
        let (orig, _) = cov_sum(self.inst, &self.x, None);
        self.sum_c = orig.clone();
        self.sum_c_orig = orig;
        for (k, &keep) in self.mask.clone().iter().enumerate() {
            if !keep {
                self.sum_c[k] = 0.0;
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn test_set_log_g(&mut self, lg: Option<f64>) {
        self.log_g = lg;
    }

    #[cfg(test)]
    pub(crate) fn test_sum_c(&self) -> &[f64] {
        &self.sum_c
    }
}

/// `sum_j x_j P_j`, optionally restricted to an active subset.
fn pack_sum(inst: &IdentityInstance, x: &[f64], active: Option<&Vec<bool>>) -> Result<SymMatrix> {
    let mut sum = SymMatrix::zeros(inst.n_p());
    for (j, p) in inst.packing().iter().enumerate() {
        if active.is_none_or(|a| a[j]) {
            sum.add_scaled(p, x[j])?;
        }
    }
    Ok(sum)
}

/// `sum_j x_j C_j` as a diagonal, optionally restricted. Also returns the
/// maximum entry for convenience.
fn cov_sum(inst: &IdentityInstance, x: &[f64], active: Option<&Vec<bool>>) -> (Vec<f64>, f64) {
    let mut sum = vec![0.0; inst.n_c()];
    for (j, c) in inst.covering().iter().enumerate() {
        if active.is_none_or(|a| a[j]) {
            for (k, &v) in c.d().iter().enumerate() {
                sum[k] += x[j] * v;
            }
        }
    }
    let max = sum.iter().fold(0.0f64, |acc, &v| acc.max(v));
    (sum, max)
}

/// `ln sum_k exp(-d_k)` over unmasked coordinates, shift-protected.
/// `-inf` when no coordinate is active.
fn ln_sum_exp_neg(d: &[f64], mask: &[bool]) -> f64 {
    let mut dmin = f64::INFINITY;
    for (k, &v) in d.iter().enumerate() {
        if mask[k] && v < dmin {
            dmin = v;
        }
    }
    if dmin == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for (k, &v) in d.iter().enumerate() {
        if mask[k] {
            acc += (-(v - dmin)).exp();
        }
    }
    -dmin + acc.ln()
}

/// `ln sum_k exp(-d_k) w_k` over unmasked coordinates for nonnegative
/// weights; `-inf` when the weighted sum vanishes.
fn ln_sum_exp_neg_weighted(d: &[f64], mask: &[bool], w: &[f64]) -> f64 {
    let mut dmin = f64::INFINITY;
    for (k, &v) in d.iter().enumerate() {
        if mask[k] && v < dmin {
            dmin = v;
        }
    }
    if dmin == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for (k, &v) in d.iter().enumerate() {
        if mask[k] {
            acc += (-(v - dmin)).exp() * w[k];
        }
    }
    if acc == 0.0 {
        return f64::NEG_INFINITY;
    }
    -dmin + acc.ln()
}

/// Potential `imax(sumP) - (1+eps)^3 imin(sumC)` for arbitrary sums; the
/// covering argument is the list of still-active diagonal entries. With an
/// empty covering list the potential is `-inf` (imin of an empty restriction
/// is `+inf`).
pub fn potential_phi(sum_p: &SymMatrix, active_covering: &[f64], epsilon: f64) -> Result<f64> {
    let imax = ln_trace_exp(sum_p)?;
    let mask = vec![true; active_covering.len()];
    let imin = -ln_sum_exp_neg(active_covering, &mask);
    Ok(imax - (1.0 + epsilon).powi(3) * imin)
}

fn auto_budget(threshold: f64, m: usize, eps: f64) -> u64 {
    let n = threshold;
    let raw = 200.0 * n * n * ((m as f64) * n + 2.0).ln() / (eps * eps);
    if raw >= u64::MAX as f64 {
        u64::MAX
    } else {
        raw.ceil() as u64
    }
}

fn run(
    inst: &IdentityInstance,
    config: &SolverConfig,
    sink: &mut dyn TraceSink,
) -> Result<SolverOutcome> {
    let mut state = SolverState::init(inst, config)?;
    let budget = match config.max_iterations {
        Budget::Auto => auto_budget(state.threshold, inst.m(), config.epsilon),
        Budget::Fixed(b) => b,
    };
    loop {
        if state.loop_lambda_min() >= state.threshold {
            break;
        }
        if state.iterations >= budget {
            return Err(Error::BudgetExhausted {
                iterations: state.iterations,
                phases: state.phases,
                trace: Vec::new(),
            });
        }
        if let Some(witness) = state.step(sink)? {
            return Ok(SolverOutcome::Infeasible(witness));
        }
    }
    Ok(SolverOutcome::Feasible(state.finish()?))
}

/// Solves the identity-form instance, collecting the trace in memory when
/// `config.trace` is set. On budget exhaustion the error carries whatever
/// trace had accumulated.
pub fn solve(inst: &IdentityInstance, config: &SolverConfig) -> Result<SolveRun> {
    let mut collected: Vec<IterationRecord> = Vec::new();
    let result = if config.trace {
        run(inst, config, &mut collected)
    } else {
        run(inst, config, &mut NullSink)
    };
    match result {
        Ok(outcome) => Ok(SolveRun {
            outcome,
            trace: collected,
        }),
        Err(Error::BudgetExhausted {
            iterations, phases, ..
        }) => Err(Error::BudgetExhausted {
            iterations,
            phases,
            trace: collected,
        }),
        Err(e) => Err(e),
    }
}

/// Streaming variant: records go to the sink as they complete, nothing is
/// retained. Useful for writing trace files without buffering long runs.
pub fn solve_streaming(
    inst: &IdentityInstance,
    config: &SolverConfig,
    sink: &mut dyn TraceSink,
) -> Result<SolverOutcome> {
    run(inst, config, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DiagMatrix;

    fn scalar_instance(p: f64, c: f64) -> IdentityInstance {
        IdentityInstance::new(
            vec![SymMatrix::new(1, vec![p]).unwrap()],
            vec![DiagMatrix::new(vec![c]).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn init_scales_x_by_packing_norms() {
        let inst = IdentityInstance::new(
            vec![
                SymMatrix::identity(2),
                SymMatrix::from_diag(&[4.0, 1.0]).unwrap(),
            ],
            vec![
                DiagMatrix::new(vec![1.0, 1.0]).unwrap(),
                DiagMatrix::new(vec![1.0, 1.0]).unwrap(),
            ],
        )
        .unwrap();
        let cfg = SolverConfig::new(0.1).unwrap();
        let st = SolverState::init(&inst, &cfg).unwrap();
        assert_eq!(st.x(), &[0.5, 0.125]);
        // sumP = diag(0.5 + 0.5, 0.5 + 0.125): norm exactly 1.
        let norm = sym_eigh(&pack_sum(&inst, st.x(), None).unwrap())
            .unwrap()
            .lambda_max();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn threshold_for_scalar_unit_instance() {
        // m = 1, n = 1, P = [1]: x = 1, ||sumP|| = 1, so
        // threshold = (1 + 0 + 0) / eps = 10 at eps = 0.1.
        let inst = scalar_instance(1.0, 1.0);
        let cfg = SolverConfig::new(0.1).unwrap();
        let st = SolverState::init(&inst, &cfg).unwrap();
        assert!((st.threshold() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn ratios_for_scalar_unit_instance() {
        // x = 1: local = (e^1 * 1)/(e^-1 * 1) = e^2, global = e^2.
        let inst = scalar_instance(1.0, 1.0);
        let cfg = SolverConfig::new(0.1).unwrap();
        let st = SolverState::init(&inst, &cfg).unwrap();
        let r = st.compute_ratios().unwrap();
        assert!((r.log_local[0] - 2.0).abs() < 1e-12);
        assert!((r.log_global - 2.0).abs() < 1e-12);
        assert_eq!(r.argmin_j, 0);
    }

    fn synthetic_ratios(min_log_local: f64, log_global: f64) -> Ratios {
        Ratios {
            log_local: vec![min_log_local],
            log_global,
            min_log_local,
            argmin_j: 0,
            imax_p: 0.0,
            imin_c: 0.0,
            pack_lambda_max: 1.0,
        }
    }

    #[test]
    fn phase_updates_follow_the_threshold_rule() {
        let inst = scalar_instance(1.0, 1.0);
        let cfg = SolverConfig::new(0.1).unwrap();
        let mut st = SolverState::init(&inst, &cfg).unwrap();

        // Unset threshold always initialises.
        assert!(st.update_phase(&synthetic_ratios(0.0, 1.0)).is_some());
        assert_eq!(st.phases(), 1);
        assert_eq!(st.log_g(), Some(1.0));

        // min_local <= g(1+eps): no advance.
        let no_move = synthetic_ratios(1.0 + 0.1f64.ln_1p(), 2.0);
        assert!(st.update_phase(&no_move).is_none());
        assert_eq!(st.log_g(), Some(1.0));

        // min_local > g(1+eps): advance to the new global.
        let advance = synthetic_ratios(1.0 + 0.1f64.ln_1p() + 1e-6, 2.0);
        assert!(st.update_phase(&advance).is_some());
        assert_eq!(st.log_g(), Some(2.0));
        assert_eq!(st.phases(), 2);
    }

    #[test]
    fn infeasibility_requires_strict_excess() {
        let inst = scalar_instance(1.0, 1.0);
        let cfg = SolverConfig::new(0.1).unwrap();
        let mut st = SolverState::init(&inst, &cfg).unwrap();
        st.test_set_log_g(Some(0.0));

        // min_local == global: a tie is not a witness.
        assert!(st
            .check_infeasible(&synthetic_ratios(1.0, 1.0), 1)
            .is_none());
        // Clear excess is.
        let w = st
            .check_infeasible(&synthetic_ratios(2f64.ln() + 1.0, 1.0), 1)
            .unwrap();
        assert_eq!(w.iteration, 1);
        assert_eq!(w.argmin_j, 0);
        assert!((w.min_local / w.global - 2.0).abs() < 1e-9);
    }

    #[test]
    fn truncation_masks_only_coordinates_above_threshold() {
        let inst = IdentityInstance::new(
            vec![SymMatrix::identity(1)],
            vec![DiagMatrix::new(vec![0.5, 2.0]).unwrap()],
        )
        .unwrap();
        let cfg = SolverConfig::new(0.1).unwrap();
        let mut st = SolverState::init(&inst, &cfg).unwrap();
        let n = st.threshold();
        // Drive the covering sum to (0.5 N, 2 N) by scaling x directly.
        st.test_set_x(vec![n]);
        assert_eq!(st.truncate_covering(1).unwrap(), 1);
        assert_eq!(st.mask(), &[true, false]);
        assert_eq!(st.test_sum_c()[1], 0.0);
        // The loop minimum ignores the masked coordinate.
        assert!((st.loop_lambda_min() - 0.5 * n).abs() < 1e-9);
        // Nothing left to truncate on a second pass.
        assert_eq!(st.truncate_covering(2).unwrap(), 0);
    }

    #[test]
    fn increment_scales_to_eps_over_dominant_norm() {
        // Single variable, x P = 0.5 I, x C = diag(0.1), eps = 0.05:
        // delta = 0.05 / 0.5 = 0.1.
        let inst = IdentityInstance::new(
            vec![SymMatrix::from_diag(&[0.5, 0.5]).unwrap()],
            vec![DiagMatrix::new(vec![0.1]).unwrap()],
        )
        .unwrap();
        let cfg = SolverConfig::new(0.05).unwrap();
        let mut st = SolverState::init(&inst, &cfg).unwrap();
        st.test_set_x(vec![1.0]);
        st.test_set_log_g(Some(f64::MAX / 4.0));
        let ratios = st.compute_ratios().unwrap();
        let inc = st.choose_increment(&ratios, 1).unwrap();
        assert_eq!(inc.active_count, 1);
        assert!((inc.delta - 0.1).abs() < 1e-13);
        assert!((inc.delta * inc.max_norm - 0.05).abs() < 1e-15);

        // Covering side dominating: x P = [1], x C = [2], eps = 0.1.
        let inst2 = scalar_instance(1.0, 2.0);
        let cfg2 = SolverConfig::new(0.1).unwrap();
        let mut st2 = SolverState::init(&inst2, &cfg2).unwrap();
        st2.test_set_x(vec![1.0]);
        st2.test_set_log_g(Some(f64::MAX / 4.0));
        let inc2 = st2
            .choose_increment(&st2.compute_ratios().unwrap(), 1)
            .unwrap();
        assert!((inc2.delta - 0.05).abs() < 1e-13);
    }

    #[test]
    fn scalar_feasible_instance_solves_with_guarantees() {
        let inst = scalar_instance(1.0, 1.0);
        let cfg = SolverConfig::new(0.1)
            .unwrap()
            .with_checks(true)
            .with_trace(true);
        let srun = solve(&inst, &cfg).unwrap();
        match &srun.outcome {
            SolverOutcome::Feasible(p) => {
                assert!(p.covering_min >= 1.0 - 1e-7);
                assert!(p.packing_norm <= 1.9 + 1e-7);
                assert!(p.x[0] >= 1.0 - 1e-7);
                assert_eq!(p.iterations, srun.trace.len() as u64);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
        assert!(!srun.trace.is_empty());
    }

    #[test]
    fn scalar_gap_instance_is_caught_at_first_iteration() {
        // P = [2], C = [1]: packing demands x <= (1+9eps)/2 < 1 <= covering
        // demand, infeasible. local/global = 2 at the very first ratios.
        let inst = scalar_instance(2.0, 1.0);
        let cfg = SolverConfig::new(0.05).unwrap().with_checks(true);
        let srun = solve(&inst, &cfg).unwrap();
        match &srun.outcome {
            SolverOutcome::Infeasible(w) => {
                assert_eq!(w.iteration, 1);
                assert_eq!(w.argmin_j, 0);
                assert!((w.min_local / w.global - 2.0).abs() < 1e-9);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn uncoverable_coordinate_is_infeasible() {
        // The second covering coordinate is zero in every C_j, so it can
        // never reach 1. The dead coordinate inflates the aggregate
        // denominator but not the per-variable ones, and the ratio test
        // catches the gap at the very first iteration.
        let inst = IdentityInstance::new(
            vec![SymMatrix::identity(1)],
            vec![DiagMatrix::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap();
        let cfg = SolverConfig::new(0.1).unwrap().with_checks(true);
        let srun = solve(&inst, &cfg).unwrap();
        match &srun.outcome {
            SolverOutcome::Infeasible(w) => {
                assert_eq!(w.iteration, 1);
                // local/global = 1 + exp(d_0) with d_0 = 1 at the start.
                assert!((w.min_local / w.global - (1.0 + 1f64.exp())).abs() < 1e-9);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn masked_out_variable_gets_infinite_local_ratio() {
        // Truncating the only coordinate a variable covers sends its local
        // ratio to +inf, which then witnesses infeasibility for whatever
        // coordinates remain.
        let inst = IdentityInstance::new(
            vec![SymMatrix::identity(1)],
            vec![DiagMatrix::new(vec![1.0, 0.0]).unwrap()],
        )
        .unwrap();
        let cfg = SolverConfig::new(0.1).unwrap();
        let mut st = SolverState::init(&inst, &cfg).unwrap();
        st.test_set_x(vec![2.0 * st.threshold()]);
        st.truncate_covering(1).unwrap();
        assert_eq!(st.mask(), &[false, true]);
        let r = st.compute_ratios().unwrap();
        assert_eq!(r.log_local[0], f64::INFINITY);
        assert_eq!(r.min_log_local, f64::INFINITY);
        assert!(r.log_global.is_finite());
        st.test_set_log_g(Some(r.log_global));
        assert!(st.check_infeasible(&r, 2).is_some());
    }

    #[test]
    fn fixed_budget_exhaustion_carries_partial_trace() {
        let inst = scalar_instance(1.0, 1.0);
        let cfg = SolverConfig::new(0.1)
            .unwrap()
            .with_budget(Budget::Fixed(3))
            .with_trace(true);
        match solve(&inst, &cfg) {
            Err(Error::BudgetExhausted {
                iterations, trace, ..
            }) => {
                assert_eq!(iterations, 3);
                assert_eq!(trace.len(), 3);
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn potential_of_zero_sums_is_log_dims() {
        // imax(0) = ln n_p, imin(0) = -ln n_c, so
        // phi = ln n_p + (1+eps)^3 ln n_c.
        let eps = 0.1;
        let phi = potential_phi(&SymMatrix::zeros(3), &[0.0; 4], eps).unwrap();
        let expect = 3f64.ln() + (1.0 + eps).powi(3) * 4f64.ln();
        assert!((phi - expect).abs() < 1e-12);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let inst = scalar_instance(1.0, 1.0);
        let cfg = SolverConfig::new(0.1).unwrap().with_trace(true);
        let a = solve(&inst, &cfg).unwrap();
        let b = solve(&inst, &cfg).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra, rb);
        }
        assert_eq!(a.outcome, b.outcome);
    }
}
