//! General instances, their reduction to identity form, and the top-level
//! question drivers.
//!
//! The iteration in [`crate::solver`] works on the normalised shape
//! `sum x_j P_j <= (1 + eps) I`, `sum x_j C_j >= I`. Everything else reduces
//! to it:
//!
//! * a general packing target `P` is absorbed by congruence with the
//!   pseudo-inverse square root `W` of `P` (variables whose packing mass
//!   leaks out of range(P) are forced to zero first, since no feasible point
//!   can use them);
//! * covering targets rescale coordinate-wise; target-zero coordinates are
//!   dropped as vacuous, and a positive target no remaining variable touches
//!   is an immediate infeasibility proof;
//! * maximising the covering level is a binary search over scaled targets,
//!   using the solver verdict as the feasibility oracle;
//! * maximising a linear objective `c . x` under packing constraints is the
//!   same search with the objective as a one-coordinate covering side.
//!
//! Solutions of the reduced instance transfer back verbatim: the packing
//! congruence preserves the meaning of x, so lifting is just re-inserting
//! zeros for the dropped variables.

use crate::error::{Error, Result};
use crate::solver::{
    solve, solve_streaming, IdentityInstance, InfeasibleWitness, IterationRecord, SolverConfig,
    SolverOutcome, TraceSink,
};
use crate::spectral::{sym_eigh, DiagMatrix, SymMatrix, PSD_REL_TOL};

/// Eigenvalues of the packing target below this fraction of the largest are
/// treated as zero when building the pseudo-inverse square root.
const RANGE_REL_TOL: f64 = 1e-10;

/// A packing matrix may leak at most this fraction of its trace outside
/// range(P) before the variable is forced to zero.
const LEAK_REL_TOL: f64 = 1e-9;

/// Relative width at which the covering-level bisection stops.
const GAMMA_REL_TOL: f64 = 1e-6;

/// Doubling past this exponent is reported as an unbounded objective.
const GAMMA_CAP_EXP: i32 = 60;

/// Feasibility instance in general form: does some x >= 0 satisfy
/// `sum x_j P_j <= (1 + eps) P` and `sum x_j C_j >= C`?
///
/// Packing matrices are symmetric PSD and `P` may be singular; the covering
/// side is diagonal throughout.
#[derive(Debug, Clone)]
pub struct MpcInstance {
    packing: Vec<SymMatrix>,
    covering: Vec<DiagMatrix>,
    pack_rhs: SymMatrix,
    cover_rhs: DiagMatrix,
}

impl MpcInstance {
    pub fn new(
        packing: Vec<SymMatrix>,
        covering: Vec<DiagMatrix>,
        pack_rhs: SymMatrix,
        cover_rhs: DiagMatrix,
    ) -> Result<Self> {
        if packing.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "packing matrix count",
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
        let n_p = pack_rhs.n();
        let n_c = cover_rhs.n();
        for p in &packing {
            if p.n() != n_p {
                return Err(Error::DimensionMismatch {
                    what: "packing matrix order",
                    expected: n_p,
                    got: p.n(),
                });
            }
            require_psd_matrix(p, "packing matrix")?;
        }
        for c in &covering {
            if c.n() != n_c {
                return Err(Error::DimensionMismatch {
                    what: "covering diagonal length",
                    expected: n_c,
                    got: c.n(),
                });
            }
        }
        require_psd_matrix(&pack_rhs, "packing target")?;
        Ok(Self {
            packing,
            covering,
            pack_rhs,
            cover_rhs,
        })
    }

    pub fn m(&self) -> usize {
        self.packing.len()
    }

    pub fn n_p(&self) -> usize {
        self.pack_rhs.n()
    }

    pub fn n_c(&self) -> usize {
        self.cover_rhs.n()
    }

    pub fn packing(&self) -> &[SymMatrix] {
        &self.packing
    }

    pub fn covering(&self) -> &[DiagMatrix] {
        &self.covering
    }

    pub fn pack_rhs(&self) -> &SymMatrix {
        &self.pack_rhs
    }

    pub fn cover_rhs(&self) -> &DiagMatrix {
        &self.cover_rhs
    }

    /// The same instance with the covering target scaled by `gamma`.
    fn with_cover_level(&self, gamma: f64) -> Result<Self> {
        Ok(Self {
            packing: self.packing.clone(),
            covering: self.covering.clone(),
            pack_rhs: self.pack_rhs.clone(),
            cover_rhs: self.cover_rhs.scale(gamma)?,
        })
    }
}

/// Objective maximisation instance: maximise `c . x` over x >= 0 with
/// `sum x_j P_j <= (1 + eps) P`.
#[derive(Debug, Clone)]
pub struct PositiveSdpInstance {
    packing: Vec<SymMatrix>,
    pack_rhs: SymMatrix,
    objective: Vec<f64>,
}

impl PositiveSdpInstance {
    pub fn new(packing: Vec<SymMatrix>, pack_rhs: SymMatrix, objective: Vec<f64>) -> Result<Self> {
        if objective.len() != packing.len() {
            return Err(Error::DimensionMismatch {
                what: "objective coefficient count",
                expected: packing.len(),
                got: objective.len(),
            });
        }
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "objective coefficients",
            });
        }
        if objective.iter().any(|v| *v < 0.0) {
            return Err(Error::NegativeEntry {
                what: "objective coefficients",
            });
        }
        if packing.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "packing matrix count",
                expected: 1,
                got: 0,
            });
        }
        let n_p = pack_rhs.n();
        for p in &packing {
            if p.n() != n_p {
                return Err(Error::DimensionMismatch {
                    what: "packing matrix order",
                    expected: n_p,
                    got: p.n(),
                });
            }
            require_psd_matrix(p, "packing matrix")?;
        }
        require_psd_matrix(&pack_rhs, "packing target")?;
        Ok(Self {
            packing,
            pack_rhs,
            objective,
        })
    }

    pub fn m(&self) -> usize {
        self.packing.len()
    }

    pub fn packing(&self) -> &[SymMatrix] {
        &self.packing
    }

    pub fn pack_rhs(&self) -> &SymMatrix {
        &self.pack_rhs
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }
}

fn require_psd_matrix(a: &SymMatrix, context: &'static str) -> Result<()> {
    let dec = sym_eigh(a)?;
    let norm = dec.lambda_max().abs().max(dec.lambda_min().abs());
    if dec.lambda_min() < -PSD_REL_TOL * norm.max(1.0) {
        return Err(Error::NotPsd {
            context,
            lambda_min: dec.lambda_min(),
        });
    }
    Ok(())
}

/// Maps a solution of the reduced instance back to the original variable
/// indices (dropped variables reappear as zeros).
#[derive(Debug, Clone)]
pub struct BackMap {
    m_orig: usize,
    kept: Vec<usize>,
}

impl BackMap {
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn lift(&self, x_reduced: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.m_orig];
        for (i, &j) in self.kept.iter().enumerate() {
            x[j] = x_reduced[i];
        }
        x
    }

    fn lift_index(&self, reduced_j: usize) -> usize {
        self.kept[reduced_j]
    }
}

/// Outcome of reducing a general instance to identity form.
#[derive(Debug, Clone)]
pub enum Normalized {
    /// A solvable core remains; `back` lifts its solutions.
    Reduced {
        inst: IdentityInstance,
        back: BackMap,
    },
    /// Every covering constraint was vacuous; x = 0 is feasible.
    TriviallyFeasible,
    /// Coordinate `coordinate` (original indexing) has a positive target but
    /// no usable variable covers it. No x can be feasible.
    Uncoverable { coordinate: usize },
}

/// Quadratic form `v^T A v`.
fn quad_form(a: &SymMatrix, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        let mut row = 0.0;
        for (j, &vj) in v.iter().enumerate() {
            row += a.get(i, j) * vj;
        }
        acc += vi * row;
    }
    acc
}

/// Reduces a general instance to identity form.
///
/// Steps, in order:
/// 1. eigendecompose the packing target and keep the eigenvectors whose
///    eigenvalue exceeds `RANGE_REL_TOL` times the largest (the range of P);
/// 2. force to zero every variable whose packing matrix leaks trace outside
///    that range (such a variable cannot take a positive value under
///    `sum x_j P_j <= (1 + eps) P`);
/// 3. drop covering coordinates with target zero, rescale the rest to
///    target one, and report any remaining coordinate that no kept variable
///    covers as an infeasibility proof;
/// 4. conjugate the kept packing matrices by `W = V_r diag(lambda^-1/2)`.
pub fn normalize_to_identity(inst: &MpcInstance) -> Result<Normalized> {
    let n_p = inst.n_p();
    let dec = sym_eigh(inst.pack_rhs())?;
    let lambda_max = dec.lambda_max().max(0.0);
    let range_tol = RANGE_REL_TOL * lambda_max;

    // Range basis of P, and W = V_r diag(lambda^-1/2) column-major.
    let mut range: Vec<usize> = Vec::new();
    for (k, &lam) in dec.eigenvalues().iter().enumerate() {
        if lam > range_tol {
            range.push(k);
        }
    }
    let r = range.len();
    let mut w = vec![0.0; n_p * r];
    for (col, &k) in range.iter().enumerate() {
        let lam = dec.eigenvalues()[k];
        let scale = 1.0 / lam.sqrt();
        let v = dec.eigenvector(k);
        for i in 0..n_p {
            w[col * n_p + i] = v[i] * scale;
        }
    }

    // Forced-zero test: trace of P_j restricted to range(P) versus its full
    // trace. PSD trace is the right yardstick because off-range mass cannot
    // cancel.
    let mut kept: Vec<usize> = Vec::new();
    for (j, p) in inst.packing().iter().enumerate() {
        let total = p.trace();
        let mut in_range = 0.0;
        for &k in &range {
            in_range += quad_form(p, dec.eigenvector(k));
        }
        let leak = total - in_range;
        if leak > LEAK_REL_TOL * total.max(f64::MIN_POSITIVE) {
            continue;
        }
        kept.push(j);
    }
    let back = BackMap {
        m_orig: inst.m(),
        kept,
    };

    // Covering side: drop vacuous coordinates, rescale the rest, and demand
    // every remaining coordinate is covered by someone kept.
    let targets = inst.cover_rhs().d();
    let mut cover_coords: Vec<usize> = Vec::new();
    for (k, &t) in targets.iter().enumerate() {
        if t > 0.0 {
            cover_coords.push(k);
        }
    }
    for &k in &cover_coords {
        let covered = back.kept.iter().any(|&j| inst.covering()[j].d()[k] > 0.0);
        if !covered {
            return Ok(Normalized::Uncoverable { coordinate: k });
        }
    }
    if cover_coords.is_empty() {
        return Ok(Normalized::TriviallyFeasible);
    }
    // Every surviving coordinate is covered, so at least one variable was
    // kept and the packing congruence below has work to do. A kept variable
    // with r == 0 is impossible: zero range means P = 0, which forces every
    // nonzero packing matrix out (and zero packing matrices are rejected by
    // instance validation downstream).

    let mut red_pack: Vec<SymMatrix> = Vec::with_capacity(back.kept.len());
    let mut red_cover: Vec<DiagMatrix> = Vec::with_capacity(back.kept.len());
    for &j in &back.kept {
        red_pack.push(inst.packing()[j].congruence(&w, r)?);
        let scaled: Vec<f64> = cover_coords
            .iter()
            .map(|&k| inst.covering()[j].d()[k] / targets[k])
            .collect();
        red_cover.push(DiagMatrix::new(scaled)?);
    }
    let reduced = IdentityInstance::new(red_pack, red_cover)?;
    Ok(Normalized::Reduced {
        inst: reduced,
        back,
    })
}

/// Reason a feasibility instance was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum InfeasibleCause {
    /// The per-variable trade ratios all exceeded the aggregate one; the
    /// witness carries the numbers (argmin_j in original indexing).
    RatioWitness(InfeasibleWitness),
    /// A covering coordinate with positive target is touched by no variable
    /// that could take a positive value.
    Uncoverable { coordinate: usize },
}

/// Feasible answer in original indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct Q1Point {
    pub x: Vec<f64>,
    pub iterations: u64,
    pub phases: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Q1Outcome {
    Feasible(Q1Point),
    Infeasible(InfeasibleCause),
}

#[derive(Debug, Clone)]
pub struct Q1Run {
    pub outcome: Q1Outcome,
    pub trace: Vec<IterationRecord>,
}

/// Decides feasibility of a general instance. Feasible answers satisfy
/// `sum x_j P_j <= (1 + 9 eps) P` and `sum x_j C_j >= C`; infeasible
/// verdicts certify that not even `sum x_j P_j <= P` works.
pub fn solve_q1(inst: &MpcInstance, config: &SolverConfig) -> Result<Q1Run> {
    match normalize_to_identity(inst)? {
        Normalized::TriviallyFeasible => Ok(Q1Run {
            outcome: Q1Outcome::Feasible(Q1Point {
                x: vec![0.0; inst.m()],
                iterations: 0,
                phases: 0,
            }),
            trace: Vec::new(),
        }),
        Normalized::Uncoverable { coordinate } => Ok(Q1Run {
            outcome: Q1Outcome::Infeasible(InfeasibleCause::Uncoverable { coordinate }),
            trace: Vec::new(),
        }),
        Normalized::Reduced { inst: red, back } => {
            let run = solve(&red, config)?;
            let outcome = match run.outcome {
                SolverOutcome::Feasible(p) => Q1Outcome::Feasible(Q1Point {
                    x: back.lift(&p.x),
                    iterations: p.iterations,
                    phases: p.phases,
                }),
                SolverOutcome::Infeasible(mut w) => {
                    w.argmin_j = back.lift_index(w.argmin_j);
                    Q1Outcome::Infeasible(InfeasibleCause::RatioWitness(w))
                }
            };
            Ok(Q1Run {
                outcome,
                trace: run.trace,
            })
        }
    }
}

/// Streaming variant of [`solve_q1`]: iteration records go to `sink` as they
/// complete instead of accumulating in memory.
pub fn solve_q1_streaming(
    inst: &MpcInstance,
    config: &SolverConfig,
    sink: &mut dyn TraceSink,
) -> Result<Q1Outcome> {
    match normalize_to_identity(inst)? {
        Normalized::TriviallyFeasible => Ok(Q1Outcome::Feasible(Q1Point {
            x: vec![0.0; inst.m()],
            iterations: 0,
            phases: 0,
        })),
        Normalized::Uncoverable { coordinate } => {
            Ok(Q1Outcome::Infeasible(InfeasibleCause::Uncoverable {
                coordinate,
            }))
        }
        Normalized::Reduced { inst: red, back } => match solve_streaming(&red, config, sink)? {
            SolverOutcome::Feasible(p) => Ok(Q1Outcome::Feasible(Q1Point {
                x: back.lift(&p.x),
                iterations: p.iterations,
                phases: p.phases,
            })),
            SolverOutcome::Infeasible(mut w) => {
                w.argmin_j = back.lift_index(w.argmin_j);
                Ok(Q1Outcome::Infeasible(InfeasibleCause::RatioWitness(w)))
            }
        },
    }
}

/// One feasibility probe of the covering-level search.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub gamma: f64,
    pub feasible: bool,
    pub iterations: u64,
}

/// Result of maximising the covering level.
#[derive(Debug, Clone)]
pub struct Q2Run {
    /// Largest covering level that probed feasible. At least `OPT` minus the
    /// bisection tolerance, and never more than `OPT (1 + 9 eps)`.
    pub gamma: f64,
    /// Witness for `gamma`, original indexing (all zeros when `gamma` is 0).
    pub x: Vec<f64>,
    pub probes: Vec<ProbeRecord>,
    /// Trace of the run that produced `x`.
    pub trace: Vec<IterationRecord>,
    pub iterations_total: u64,
}

struct FeasibleProbe {
    gamma: f64,
    x: Vec<f64>,
    trace: Vec<IterationRecord>,
}

/// Maximises `gamma` such that `sum x_j P_j <= (1 + eps) P`,
/// `sum x_j C_j >= gamma C` stays feasible, by doubling out of `gamma = 1`
/// and bisecting the bracket. Infeasible probes are proofs (the solver
/// certifies them against the unrelaxed packing target), so the returned
/// level is an honest lower bound on the optimum.
pub fn solve_q2(inst: &MpcInstance, config: &SolverConfig) -> Result<Q2Run> {
    let mut probes: Vec<ProbeRecord> = Vec::new();
    let mut iterations_total: u64 = 0;
    let mut probe = |gamma: f64| -> Result<Option<FeasibleProbe>> {
        let scaled = inst.with_cover_level(gamma)?;
        let run = solve_q1(&scaled, config)?;
        let (feasible, iterations) = match &run.outcome {
            Q1Outcome::Feasible(p) => (true, p.iterations),
            Q1Outcome::Infeasible(_) => {
                let it = run.trace.last().map(|r| r.iter).unwrap_or(0);
                (false, it)
            }
        };
        iterations_total += iterations;
        probes.push(ProbeRecord {
            gamma,
            feasible,
            iterations,
        });
        Ok(match run.outcome {
            Q1Outcome::Feasible(p) => Some(FeasibleProbe {
                gamma,
                x: p.x,
                trace: run.trace,
            }),
            Q1Outcome::Infeasible(_) => None,
        })
    };

    // Bracket the optimum: double while feasible, halve while infeasible.
    let mut best: Option<FeasibleProbe> = None;
    let mut hi: Option<f64> = None;
    let mut gamma = 1.0;
    match probe(gamma)? {
        Some(p) => {
            best = Some(p);
            for _ in 0..GAMMA_CAP_EXP {
                gamma *= 2.0;
                match probe(gamma)? {
                    Some(p) => best = Some(p),
                    None => {
                        hi = Some(gamma);
                        break;
                    }
                }
            }
            if hi.is_none() {
                return Err(Error::Unbounded);
            }
        }
        None => {
            hi = Some(gamma);
            let mut found = false;
            for _ in 0..GAMMA_CAP_EXP {
                gamma *= 0.5;
                match probe(gamma)? {
                    Some(p) => {
                        best = Some(p);
                        found = true;
                        break;
                    }
                    None => hi = Some(gamma),
                }
            }
            if !found {
                // Optimum below 2^-60: report zero with the trivial witness.
                return Ok(Q2Run {
                    gamma: 0.0,
                    x: vec![0.0; inst.m()],
                    probes,
                    trace: Vec::new(),
                    iterations_total,
                });
            }
        }
    }

    // Bisect the bracket down to a relative tolerance.
    let mut lo = best.as_ref().map(|p| p.gamma).expect("bracketed");
    let mut hi = hi.expect("bracketed");
    let tol = GAMMA_REL_TOL * hi;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match probe(mid)? {
            Some(p) => {
                best = Some(p);
                lo = mid;
            }
            None => hi = mid,
        }
    }

    let best = best.expect("bracketed");
    Ok(Q2Run {
        gamma: best.gamma,
        x: best.x,
        probes,
        trace: best.trace,
        iterations_total,
    })
}

/// Result of maximising a linear objective under packing constraints.
#[derive(Debug, Clone)]
pub struct Q3Run {
    /// Achieved objective `c . x`. At least `(1 - eps') OPT` minus the
    /// bisection tolerance and at most `OPT (1 + eps / 2)`, where `eps'` is
    /// the probe accuracy `eps / 18`.
    pub value: f64,
    pub x: Vec<f64>,
    /// Covering level the search settled on (a lower bound on `value`).
    pub gamma: f64,
    pub probes: Vec<ProbeRecord>,
    pub iterations_total: u64,
}

/// Maximises `c . x` subject to `sum x_j P_j <= (1 + eps) P`, x >= 0. The
/// objective becomes a one-coordinate covering side (`c . x >= gamma`) and
/// the covering level is maximised; probes run at accuracy `eps / 18` so the
/// combined relaxation stays within a `(1 + eps/2)` factor.
pub fn solve_q3(inst: &PositiveSdpInstance, config: &SolverConfig) -> Result<Q3Run> {
    if inst.objective().iter().all(|&c| c == 0.0) {
        return Ok(Q3Run {
            value: 0.0,
            x: vec![0.0; inst.m()],
            gamma: 0.0,
            probes: Vec::new(),
            iterations_total: 0,
        });
    }
    let covering: Vec<DiagMatrix> = inst
        .objective()
        .iter()
        .map(|&c| DiagMatrix::new(vec![c]))
        .collect::<Result<_>>()?;
    let mpc = MpcInstance::new(
        inst.packing().to_vec(),
        covering,
        inst.pack_rhs().clone(),
        DiagMatrix::new(vec![1.0])?,
    )?;
    let mut sub = config.clone();
    sub.epsilon = config.epsilon / 18.0;
    let q2 = solve_q2(&mpc, &sub)?;
    let value = inst.objective().iter().zip(&q2.x).map(|(c, x)| c * x).sum();
    Ok(Q3Run {
        value,
        x: q2.x,
        gamma: q2.gamma,
        probes: q2.probes,
        iterations_total: q2.iterations_total,
    })
}
