//! `mpcsdp`: solve, verify and generate mixed packing/covering SDP instances.
//!
//! Exit codes: 0 on success (feasible answer, passing verification, file
//! written), 2 when the instance is infeasible or a verification fails,
//! 3 when the iteration budget runs out, 1 for usage, format and IO errors.

use std::fs;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpcsdp_cli::{
    CliError, CsvSink, InfeasibleReport, InstanceFile, Problem, ProblemKind, Report, SolutionFile,
};
use mpcsdp_core::error::Error;
use mpcsdp_core::gen::{diagonal_objective, margin_infeasible, planted_general, planted_identity};
use mpcsdp_core::reduce::{
    solve_q1, solve_q1_streaming, solve_q2, solve_q3, InfeasibleCause, MpcInstance,
    PositiveSdpInstance, Q1Outcome,
};
use mpcsdp_core::solver::{trace_csv, Budget, IterationRecord, SolverConfig};
use mpcsdp_core::verify::{verify_objective, verify_solution};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mpcsdp",
    about = "Width-independent solver for mixed packing and covering semidefinite programs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file; what is solved is read from its `problem` field
    Solve {
        /// Instance JSON file
        instance: PathBuf,
        /// Relative accuracy, in (0, 1)
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Write the solution vector to this JSON file
        #[arg(long, value_name = "PATH")]
        solution: Option<PathBuf>,
        /// Write the per-iteration trace to this CSV file
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        /// Cap the iteration count (default scales with the instance)
        #[arg(long, value_name = "N")]
        max_iterations: Option<u64>,
        /// Run per-iteration self-checks (one extra eigendecomposition each)
        #[arg(long)]
        check_invariants: bool,
    },
    /// Check a solution vector against an instance file
    Verify {
        /// Instance JSON file
        instance: PathBuf,
        /// Solution JSON file (an object with an `x` array)
        solution: PathBuf,
        /// Allowed packing relaxation factor (1 checks the unrelaxed bound)
        #[arg(long, default_value_t = 1.9)]
        relax: f64,
        /// Scale the covering target before checking (for covering-level
        /// answers, pass the achieved level)
        #[arg(long, default_value_t = 1.0)]
        covering_scale: f64,
    },
    /// Write a seeded instance file
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
}

#[derive(Subcommand)]
enum GenerateKind {
    /// Feasible instance with identity targets and a planted witness
    PlantedIdentity {
        /// Matrix order
        #[arg(long)]
        n: usize,
        /// Number of variables
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        /// Tag the file as a covering-level problem instead of feasibility
        #[arg(long)]
        covering_level: bool,
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
    },
    /// Feasible instance with general targets, witness included
    PlantedGeneral {
        /// Matrix order
        #[arg(long)]
        n: usize,
        /// Number of variables
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        /// Make the packing target singular (rank n - 1)
        #[arg(long)]
        singular: bool,
        /// Tag the file as a covering-level problem instead of feasibility
        #[arg(long)]
        covering_level: bool,
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
    },
    /// Infeasible instance with a uniform packing/covering gap
    MarginInfeasible {
        /// Matrix order
        #[arg(long)]
        n: usize,
        /// Number of variables
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        /// Gap factor; must exceed 1 + 9 * epsilon
        #[arg(long, default_value_t = 2.0)]
        margin: f64,
        /// Accuracy the instance must stay infeasible at
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
    },
    /// Diagonal objective-maximisation instance
    Objective {
        /// Matrix order
        #[arg(long)]
        n: usize,
        /// Number of variables
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Solve {
            instance,
            epsilon,
            solution,
            trace,
            max_iterations,
            check_invariants,
        } => {
            let problem = InstanceFile::read(&instance)?.into_problem()?;
            let mut config = SolverConfig::new(epsilon)?.with_checks(check_invariants);
            if let Some(n) = max_iterations {
                config = config.with_budget(Budget::Fixed(n));
            }
            match problem {
                Problem::Feasibility(inst) => {
                    solve_feasibility(&inst, &config, epsilon, trace, solution)
                }
                Problem::CoveringLevel(inst) => solve_level(&inst, &config, trace, solution),
                Problem::Objective(inst) => solve_objective(&inst, &config, trace, solution),
            }
        }
        Command::Verify {
            instance,
            solution,
            relax,
            covering_scale,
        } => cmd_verify(&instance, &solution, relax, covering_scale),
        Command::Generate { kind } => cmd_generate(kind),
    }
}

fn print_report(report: &Report) -> Result<(), CliError> {
    println!("{}", serde_json::to_string(report)?);
    Ok(())
}

fn write_trace_file(path: &Path, records: &[IterationRecord]) -> Result<(), CliError> {
    fs::write(path, trace_csv(records))
        .map_err(|e| CliError::Format(format!("cannot write {}: {e}", path.display())))
}

fn write_solution_file(path: Option<&PathBuf>, x: &[f64]) -> Result<(), CliError> {
    if let Some(path) = path {
        SolutionFile { x: x.to_vec() }.write(path)?;
    }
    Ok(())
}

fn budget_report(iterations: u64, phases: u64) -> Result<ExitCode, CliError> {
    print_report(&Report::BudgetExhausted { iterations, phases })?;
    Ok(ExitCode::from(EXIT_BUDGET))
}

fn infeasible_report(cause: InfeasibleCause) -> InfeasibleReport {
    match cause {
        InfeasibleCause::RatioWitness(w) => InfeasibleReport::RatioWitness {
            iteration: w.iteration,
            g: w.g,
            global: w.global,
            min_local: w.min_local,
            argmin_j: w.argmin_j,
        },
        InfeasibleCause::Uncoverable { coordinate } => InfeasibleReport::Uncoverable { coordinate },
    }
}

fn solve_feasibility(
    inst: &MpcInstance,
    config: &SolverConfig,
    epsilon: f64,
    trace: Option<PathBuf>,
    solution: Option<PathBuf>,
) -> Result<ExitCode, CliError> {
    // With a trace file the records stream to disk as iterations complete;
    // on budget exhaustion the partial trace is already there.
    let result = if let Some(path) = &trace {
        let file = File::create(path)
            .map_err(|e| CliError::Format(format!("cannot write {}: {e}", path.display())))?;
        let mut sink = CsvSink::new(BufWriter::new(file))?;
        let result = solve_q1_streaming(inst, config, &mut sink);
        sink.finish()?;
        result
    } else {
        solve_q1(inst, config).map(|run| run.outcome)
    };
    match result {
        Ok(Q1Outcome::Feasible(point)) => {
            let report = verify_solution(inst, &point.x, 1.0 + 9.0 * epsilon)?;
            if !report.ok {
                return Err(CliError::Format(format!(
                    "solver answer failed verification: packing slack {}, covering slack {}",
                    report.packing_slack, report.covering_slack
                )));
            }
            write_solution_file(solution.as_ref(), &point.x)?;
            print_report(&Report::Feasible {
                iterations: point.iterations,
                phases: point.phases,
                packing_slack: report.packing_slack,
                covering_slack: report.covering_slack,
                x: point.x,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Ok(Q1Outcome::Infeasible(cause)) => {
            print_report(&Report::Infeasible {
                cause: infeasible_report(cause),
            })?;
            Ok(ExitCode::from(EXIT_INFEASIBLE))
        }
        Err(Error::BudgetExhausted {
            iterations, phases, ..
        }) => budget_report(iterations, phases),
        Err(e) => Err(e.into()),
    }
}

fn solve_level(
    inst: &MpcInstance,
    config: &SolverConfig,
    trace: Option<PathBuf>,
    solution: Option<PathBuf>,
) -> Result<ExitCode, CliError> {
    // The level search runs many probes; the trace kept is the one of the
    // run that produced the final answer, written after the fact.
    let config = config.clone().with_trace(trace.is_some());
    match solve_q2(inst, &config) {
        Ok(run) => {
            if let Some(path) = &trace {
                write_trace_file(path, &run.trace)?;
            }
            write_solution_file(solution.as_ref(), &run.x)?;
            print_report(&Report::CoveringLevel {
                gamma: run.gamma,
                probes: run.probes.len(),
                iterations: run.iterations_total,
                x: run.x,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::BudgetExhausted {
            iterations,
            phases,
            trace: partial,
        }) => {
            if let Some(path) = &trace {
                write_trace_file(path, &partial)?;
            }
            budget_report(iterations, phases)
        }
        Err(e) => Err(e.into()),
    }
}

fn solve_objective(
    inst: &PositiveSdpInstance,
    config: &SolverConfig,
    trace: Option<PathBuf>,
    solution: Option<PathBuf>,
) -> Result<ExitCode, CliError> {
    let config = config.clone().with_trace(trace.is_some());
    match solve_q3(inst, &config) {
        Ok(run) => {
            write_solution_file(solution.as_ref(), &run.x)?;
            print_report(&Report::Objective {
                value: run.value,
                gamma: run.gamma,
                probes: run.probes.len(),
                iterations: run.iterations_total,
                x: run.x,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::BudgetExhausted {
            iterations,
            phases,
            trace: partial,
        }) => {
            if let Some(path) = &trace {
                write_trace_file(path, &partial)?;
            }
            budget_report(iterations, phases)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_verify(
    instance: &Path,
    solution: &Path,
    relax: f64,
    covering_scale: f64,
) -> Result<ExitCode, CliError> {
    let problem = InstanceFile::read(instance)?.into_problem()?;
    let sol = SolutionFile::read(solution)?;
    let (report, ok) = match problem {
        Problem::Feasibility(inst) | Problem::CoveringLevel(inst) => {
            let inst = if covering_scale == 1.0 {
                inst
            } else {
                MpcInstance::new(
                    inst.packing().to_vec(),
                    inst.covering().to_vec(),
                    inst.pack_rhs().clone(),
                    inst.cover_rhs().scale(covering_scale)?,
                )?
            };
            let rep = verify_solution(&inst, &sol.x, relax)?;
            (
                Report::Verified {
                    ok: rep.ok,
                    packing_slack: rep.packing_slack,
                    packing_tol: rep.packing_tol,
                    covering_slack: rep.covering_slack,
                    covering_tol: rep.covering_tol,
                },
                rep.ok,
            )
        }
        Problem::Objective(inst) => {
            let rep = verify_objective(&inst, &sol.x, relax)?;
            (
                Report::VerifiedObjective {
                    ok: rep.ok,
                    packing_slack: rep.packing_slack,
                    packing_tol: rep.packing_tol,
                    value: rep.value,
                },
                rep.ok,
            )
        }
    };
    print_report(&report)?;
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INFEASIBLE)
    })
}

fn cmd_generate(kind: GenerateKind) -> Result<ExitCode, CliError> {
    match kind {
        GenerateKind::PlantedIdentity {
            n,
            m,
            seed,
            covering_level,
            output,
        } => {
            let planted = planted_identity(n, m, seed)?;
            let problem = mixed_kind(covering_level);
            InstanceFile::from_mixed(problem, &planted.instance, Some(planted.witness))
                .write(&output)?;
        }
        GenerateKind::PlantedGeneral {
            n,
            m,
            seed,
            singular,
            covering_level,
            output,
        } => {
            let planted = planted_general(n, m, seed, singular)?;
            let problem = mixed_kind(covering_level);
            InstanceFile::from_mixed(problem, &planted.instance, Some(planted.witness))
                .write(&output)?;
        }
        GenerateKind::MarginInfeasible {
            n,
            m,
            seed,
            margin,
            epsilon,
            output,
        } => {
            let gen = margin_infeasible(n, m, seed, margin, epsilon)?;
            InstanceFile::from_mixed(ProblemKind::Feasibility, &gen.instance, None)
                .write(&output)?;
        }
        GenerateKind::Objective { n, m, seed, output } => {
            let inst = diagonal_objective(n, m, seed)?;
            InstanceFile::from_positive(&inst).write(&output)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn mixed_kind(covering_level: bool) -> ProblemKind {
    if covering_level {
        ProblemKind::CoveringLevel
    } else {
        ProblemKind::Feasibility
    }
}
