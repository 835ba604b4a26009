//! End-to-end solver runs across accuracies, seeds and instance shapes,
//! with the per-iteration self-checks switched on. These are the slower
//! cousins of the unit tests: everything goes through the public API and
//! every feasible answer is re-verified against the original instance.

use mpcsdp_core::error::Error;
use mpcsdp_core::gen::{margin_infeasible, planted_general, planted_identity};
use mpcsdp_core::reduce::{solve_q1, solve_q2, InfeasibleCause, MpcInstance, Q1Outcome};
use mpcsdp_core::solver::{solve, Budget, IdentityInstance, SolverConfig, SolverOutcome};
use mpcsdp_core::spectral::{DiagMatrix, SymMatrix};
use mpcsdp_core::verify::verify_solution;

fn identity_form(inst: &MpcInstance) -> IdentityInstance {
    IdentityInstance::new(inst.packing().to_vec(), inst.covering().to_vec()).unwrap()
}

#[test]
fn planted_identity_feasible_across_accuracies() {
    for &eps in &[0.05, 0.1, 0.3] {
        for seed in [1, 2, 3] {
            let planted = planted_identity(10, 8, seed).unwrap();
            let config = SolverConfig::new(eps).unwrap().with_checks(true);
            let run = solve(&identity_form(&planted.instance), &config).unwrap();
            let point = match run.outcome {
                SolverOutcome::Feasible(p) => p,
                SolverOutcome::Infeasible(w) => {
                    panic!("planted seed {seed} at eps {eps} reported infeasible: {w:?}")
                }
            };
            let report = verify_solution(&planted.instance, &point.x, 1.0 + 9.0 * eps).unwrap();
            assert!(
                report.ok,
                "seed {seed} at eps {eps}: packing slack {}, covering slack {}",
                report.packing_slack, report.covering_slack
            );
        }
    }
}

#[test]
fn planted_witness_verifies_as_given() {
    // Generator contract: the witness meets the packing target exactly and
    // overshoots the covering target, so it verifies with no relaxation.
    for seed in [4, 5] {
        let planted = planted_identity(12, 9, seed).unwrap();
        let report = verify_solution(&planted.instance, &planted.witness, 1.0).unwrap();
        assert!(
            report.ok,
            "seed {seed}: witness failed at relax 1: packing slack {}, covering slack {}",
            report.packing_slack, report.covering_slack
        );
    }
}

#[test]
fn general_targets_round_trip_with_checks_on() {
    for (seed, singular) in [(11, false), (12, true)] {
        let planted = planted_general(9, 6, seed, singular).unwrap();
        let config = SolverConfig::new(0.1).unwrap().with_checks(true);
        let run = solve_q1(&planted.instance, &config).unwrap();
        let point = match run.outcome {
            Q1Outcome::Feasible(p) => p,
            Q1Outcome::Infeasible(cause) => {
                panic!("seed {seed} (singular {singular}) reported infeasible: {cause:?}")
            }
        };
        let report = verify_solution(&planted.instance, &point.x, 1.9).unwrap();
        assert!(
            report.ok,
            "seed {seed} (singular {singular}) failed verification"
        );
    }
}

#[test]
fn margin_instances_stay_infeasible_with_checks_on() {
    // Margin 1.5 exceeds 1 + 9 * 0.05, so infeasibility must be certified at
    // every accuracy at or below 0.05.
    for seed in [7, 8] {
        let gen = margin_infeasible(6, 4, seed, 1.5, 0.05).unwrap();
        for &eps in &[0.05, 0.02] {
            let config = SolverConfig::new(eps).unwrap().with_checks(true);
            let run = solve_q1(&gen.instance, &config).unwrap();
            match run.outcome {
                Q1Outcome::Infeasible(InfeasibleCause::RatioWitness(w)) => {
                    assert!(w.iteration >= 1);
                    assert!(
                        w.min_local > w.global,
                        "witness ratios must separate: min local {} vs global {}",
                        w.min_local,
                        w.global
                    );
                }
                other => panic!("margin seed {seed} at eps {eps}: unexpected outcome {other:?}"),
            }
        }
    }
}

#[test]
fn positive_target_with_no_support_is_uncoverable() {
    // Second covering coordinate has a positive target but no variable
    // touches it; the reducer must refuse without running the iteration.
    let inst = MpcInstance::new(
        vec![SymMatrix::identity(2)],
        vec![DiagMatrix::new(vec![1.0, 0.0]).unwrap()],
        SymMatrix::identity(2),
        DiagMatrix::new(vec![1.0, 1.0]).unwrap(),
    )
    .unwrap();
    let config = SolverConfig::new(0.1).unwrap();
    let run = solve_q1(&inst, &config).unwrap();
    assert_eq!(
        run.outcome,
        Q1Outcome::Infeasible(InfeasibleCause::Uncoverable { coordinate: 1 })
    );
    assert!(run.trace.is_empty());
}

#[test]
fn exhausted_budget_reports_progress_and_trace() {
    let planted = planted_identity(8, 6, 21).unwrap();
    let config = SolverConfig::new(0.1)
        .unwrap()
        .with_budget(Budget::Fixed(3))
        .with_trace(true);
    match solve(&identity_form(&planted.instance), &config) {
        Err(Error::BudgetExhausted {
            iterations,
            phases,
            trace,
        }) => {
            assert_eq!(iterations, 3);
            assert!(phases >= 1);
            assert_eq!(trace.len(), 3);
        }
        other => panic!("expected budget exhaustion, got {other:?}"),
    }
}

#[test]
fn covering_level_search_reaches_the_planted_margin() {
    // The planted witness covers at 1.25 while meeting the packing target
    // exactly, so the best covering level is at least 1.25; the search must
    // find that much (and its answer must verify against the scaled target).
    let planted = planted_identity(8, 6, 30).unwrap();
    let config = SolverConfig::new(0.1).unwrap();
    let run = solve_q2(&planted.instance, &config).unwrap();
    assert!(
        run.gamma >= 1.25 * (1.0 - 1e-5),
        "covering level {} fell short of the planted 1.25",
        run.gamma
    );
    let best_feasible = run
        .probes
        .iter()
        .filter(|p| p.feasible)
        .map(|p| p.gamma)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(run.gamma, best_feasible);

    let scaled = MpcInstance::new(
        planted.instance.packing().to_vec(),
        planted.instance.covering().to_vec(),
        planted.instance.pack_rhs().clone(),
        planted.instance.cover_rhs().scale(run.gamma).unwrap(),
    )
    .unwrap();
    let report = verify_solution(&scaled, &run.x, 1.0 + 9.0 * 0.1).unwrap();
    assert!(
        report.ok,
        "covering-level point failed verification: packing slack {}, covering slack {}",
        report.packing_slack, report.covering_slack
    );
}
