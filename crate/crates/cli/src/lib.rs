//! File formats for the command line front end.
//!
//! Instances travel as JSON: symmetric matrices are row-major `n x n` entry
//! arrays, covering matrices and targets are diagonals. The `problem` field
//! selects what `solve` does with the file:
//!
//! - `"feasibility"`: find `x >= 0` with `sum x_j P_j <= (1 + 9 eps) P` and
//!   `sum x_j C_j >= C`, or certify that the unrelaxed system is infeasible.
//! - `"covering-level"`: maximise `gamma` such that the covering target
//!   `gamma * C` stays feasible.
//! - `"objective"`: maximise `c . x` under the packing constraint alone.
//!
//! Traces are CSV with the canonical header from the solver crate; repeated
//! runs on the same inputs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use mpcsdp_core::reduce::{MpcInstance, PositiveSdpInstance};
use mpcsdp_core::solver::{IterationRecord, TraceSink, TRACE_CSV_HEADER};
use mpcsdp_core::spectral::{DiagMatrix, SymMatrix};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Solver(#[from] mpcsdp_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn format_err(what: impl Into<String>) -> CliError {
    CliError::Format(what.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Feasibility,
    CoveringLevel,
    Objective,
}

impl ProblemKind {
    fn name(self) -> &'static str {
        match self {
            ProblemKind::Feasibility => "feasibility",
            ProblemKind::CoveringLevel => "covering-level",
            ProblemKind::Objective => "objective",
        }
    }
}

/// Instance as stored on disk. Fields that do not apply to the problem kind
/// are omitted; unknown fields are rejected rather than ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format_version: u32,
    pub problem: ProblemKind,
    /// Number of variables.
    pub m: usize,
    /// Order of the packing matrices.
    pub n_p: usize,
    /// Order of the covering matrices (mixed problems only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_c: Option<usize>,
    /// Row-major `n_p x n_p` entries, one array per variable.
    pub packing: Vec<Vec<f64>>,
    /// Row-major `n_p x n_p` entries of the packing target.
    pub packing_target: Vec<f64>,
    /// Covering diagonals, one array of length `n_c` per variable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covering: Option<Vec<Vec<f64>>>,
    /// Covering target diagonal, length `n_c`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covering_target: Option<Vec<f64>>,
    /// Objective coefficients (objective problems only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<Vec<f64>>,
    /// Known feasible point, when the generator planted one. Ignored by the
    /// solver; kept so generated files are self-checking via `verify`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
}

/// A parsed instance, ready for the matching solve entry point.
#[derive(Debug, Clone)]
pub enum Problem {
    Feasibility(MpcInstance),
    CoveringLevel(MpcInstance),
    Objective(PositiveSdpInstance),
}

impl InstanceFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| format_err(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)
            .map_err(|e| format_err(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    /// Validates the cross-field structure and builds the typed instance.
    /// Matrix-level defects (non-PSD packing, negative covering entries,
    /// dimension mismatches) surface as solver errors with the offending
    /// field named here.
    pub fn into_problem(self) -> Result<Problem> {
        if self.format_version != FORMAT_VERSION {
            return Err(format_err(format!(
                "format_version: this build reads version {FORMAT_VERSION}, file has {}",
                self.format_version
            )));
        }
        if self.packing.len() != self.m {
            return Err(format_err(format!(
                "packing: expected m = {} matrices, got {}",
                self.m,
                self.packing.len()
            )));
        }
        let mut packing = Vec::with_capacity(self.m);
        for (j, entries) in self.packing.into_iter().enumerate() {
            packing.push(
                SymMatrix::new(self.n_p, entries)
                    .map_err(|e| format_err(format!("packing[{j}]: {e}")))?,
            );
        }
        let pack_rhs = SymMatrix::new(self.n_p, self.packing_target)
            .map_err(|e| format_err(format!("packing_target: {e}")))?;

        match self.problem {
            ProblemKind::Feasibility | ProblemKind::CoveringLevel => {
                if self.objective.is_some() {
                    return Err(format_err(format!(
                        "objective: does not apply to problem \"{}\"",
                        self.problem.name()
                    )));
                }
                let n_c = self.n_c.ok_or_else(|| {
                    format_err(format!(
                        "n_c: required for problem \"{}\"",
                        self.problem.name()
                    ))
                })?;
                let rows = self.covering.ok_or_else(|| {
                    format_err(format!(
                        "covering: required for problem \"{}\"",
                        self.problem.name()
                    ))
                })?;
                let target = self.covering_target.ok_or_else(|| {
                    format_err(format!(
                        "covering_target: required for problem \"{}\"",
                        self.problem.name()
                    ))
                })?;
                if rows.len() != self.m {
                    return Err(format_err(format!(
                        "covering: expected m = {} diagonals, got {}",
                        self.m,
                        rows.len()
                    )));
                }
                let mut covering = Vec::with_capacity(self.m);
                for (j, d) in rows.into_iter().enumerate() {
                    if d.len() != n_c {
                        return Err(format_err(format!(
                            "covering[{j}]: expected n_c = {n_c} entries, got {}",
                            d.len()
                        )));
                    }
                    covering.push(
                        DiagMatrix::new(d)
                            .map_err(|e| format_err(format!("covering[{j}]: {e}")))?,
                    );
                }
                if target.len() != n_c {
                    return Err(format_err(format!(
                        "covering_target: expected n_c = {n_c} entries, got {}",
                        target.len()
                    )));
                }
                let cover_rhs = DiagMatrix::new(target)
                    .map_err(|e| format_err(format!("covering_target: {e}")))?;
                let inst = MpcInstance::new(packing, covering, pack_rhs, cover_rhs)?;
                Ok(match self.problem {
                    ProblemKind::CoveringLevel => Problem::CoveringLevel(inst),
                    _ => Problem::Feasibility(inst),
                })
            }
            ProblemKind::Objective => {
                for (field, present) in [
                    ("n_c", self.n_c.is_some()),
                    ("covering", self.covering.is_some()),
                    ("covering_target", self.covering_target.is_some()),
                ] {
                    if present {
                        return Err(format_err(format!(
                            "{field}: does not apply to problem \"objective\""
                        )));
                    }
                }
                let objective = self
                    .objective
                    .ok_or_else(|| format_err("objective: required for problem \"objective\""))?;
                let inst = PositiveSdpInstance::new(packing, pack_rhs, objective)?;
                Ok(Problem::Objective(inst))
            }
        }
    }

    pub fn from_mixed(problem: ProblemKind, inst: &MpcInstance, witness: Option<Vec<f64>>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            problem,
            m: inst.m(),
            n_p: inst.pack_rhs().n(),
            n_c: Some(inst.cover_rhs().n()),
            packing: inst.packing().iter().map(|p| p.data().to_vec()).collect(),
            packing_target: inst.pack_rhs().data().to_vec(),
            covering: Some(inst.covering().iter().map(|c| c.d().to_vec()).collect()),
            covering_target: Some(inst.cover_rhs().d().to_vec()),
            objective: None,
            witness,
        }
    }

    pub fn from_positive(inst: &PositiveSdpInstance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            problem: ProblemKind::Objective,
            m: inst.m(),
            n_p: inst.pack_rhs().n(),
            n_c: None,
            packing: inst.packing().iter().map(|p| p.data().to_vec()).collect(),
            packing_target: inst.pack_rhs().data().to_vec(),
            covering: None,
            covering_target: None,
            objective: Some(inst.objective().to_vec()),
            witness: None,
        }
    }
}

/// Solution vector as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub x: Vec<f64>,
}

impl SolutionFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| format_err(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)
            .map_err(|e| format_err(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// One-line JSON report printed on stdout by the solve and verify commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Report {
    Feasible {
        iterations: u64,
        phases: u64,
        packing_slack: f64,
        covering_slack: f64,
        x: Vec<f64>,
    },
    Infeasible {
        cause: InfeasibleReport,
    },
    CoveringLevel {
        gamma: f64,
        probes: usize,
        iterations: u64,
        x: Vec<f64>,
    },
    Objective {
        value: f64,
        gamma: f64,
        probes: usize,
        iterations: u64,
        x: Vec<f64>,
    },
    Verified {
        ok: bool,
        packing_slack: f64,
        packing_tol: f64,
        covering_slack: f64,
        covering_tol: f64,
    },
    VerifiedObjective {
        ok: bool,
        packing_slack: f64,
        packing_tol: f64,
        value: f64,
    },
    BudgetExhausted {
        iterations: u64,
        phases: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InfeasibleReport {
    /// The iteration found a round where every variable's packing/covering
    /// trade exceeded the aggregate one.
    RatioWitness {
        iteration: u64,
        g: f64,
        global: f64,
        min_local: f64,
        argmin_j: usize,
    },
    /// A covering coordinate with a positive target is touched by no
    /// variable that could take a positive value.
    Uncoverable { coordinate: usize },
}

/// Streams iteration records to a writer as CSV. Write failures are held
/// until [`CsvSink::finish`] because the solver's sink interface has no
/// error channel.
pub struct CsvSink<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        Ok(Self { out, error: None })
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()
    }
}

impl<W: Write> TraceSink for CsvSink<W> {
    fn record(&mut self, rec: &IterationRecord) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(self.out, "{}", rec.csv_line()) {
            self.error = Some(e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_file() -> InstanceFile {
        InstanceFile {
            format_version: FORMAT_VERSION,
            problem: ProblemKind::Feasibility,
            m: 1,
            n_p: 1,
            n_c: Some(1),
            packing: vec![vec![2.0]],
            packing_target: vec![1.0],
            covering: Some(vec![vec![1.0]]),
            covering_target: Some(vec![1.0]),
            objective: None,
            witness: None,
        }
    }

    #[test]
    fn round_trips_through_json() {
        let file = minimal_file();
        let text = serde_json::to_string(&file).unwrap();
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        match back.into_problem().unwrap() {
            Problem::Feasibility(inst) => {
                assert_eq!(inst.m(), 1);
                assert_eq!(inst.packing()[0].get(0, 0), 2.0);
            }
            other => panic!("expected a feasibility instance, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_fields() {
        let err = serde_json::from_str::<InstanceFile>(
            r#"{"format_version":1,"problem":"feasibility","m":1,"n_p":1,
                "packing":[[1.0]],"packing_target":[1.0],"bogus":3}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn names_the_offending_field() {
        let mut file = minimal_file();
        file.covering = None;
        let err = file.into_problem().unwrap_err();
        assert!(err.to_string().starts_with("covering:"), "{err}");

        let mut file = minimal_file();
        file.packing = vec![vec![1.0, 2.0]];
        let err = file.into_problem().unwrap_err();
        assert!(err.to_string().starts_with("packing[0]:"), "{err}");

        let mut file = minimal_file();
        file.objective = Some(vec![1.0]);
        let err = file.into_problem().unwrap_err();
        assert!(err.to_string().starts_with("objective:"), "{err}");

        let mut file = minimal_file();
        file.format_version = 9;
        let err = file.into_problem().unwrap_err();
        assert!(err.to_string().starts_with("format_version:"), "{err}");
    }

    #[test]
    fn objective_files_reject_covering_fields() {
        let mut file = minimal_file();
        file.problem = ProblemKind::Objective;
        file.objective = Some(vec![1.0]);
        let err = file.into_problem().unwrap_err();
        assert!(err.to_string().starts_with("n_c:"), "{err}");
    }

    #[test]
    fn csv_sink_writes_header_and_lines() {
        let mut buf = Vec::new();
        {
            let mut sink = CsvSink::new(&mut buf).unwrap();
            let rec = IterationRecord {
                iter: 1,
                g: 1.0,
                global: 2.0,
                min_local: 1.5,
                argmin_j: 0,
                lambda_min_c: 0.1,
                norm_p: 0.2,
                phi: 3.0,
                delta: 0.05,
                active_count: 1,
                log_g: 0.0,
                log_global: 2.0f64.ln(),
                log_min_local: 1.5f64.ln(),
                imax_p: 1.0,
                imin_c: 0.1,
            };
            sink.record(&rec);
            sink.finish().unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("1,1,2,1.5,0,"));
        assert_eq!(lines.next(), None);
    }
}
