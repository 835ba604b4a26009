//! End-to-end runs of the `mpcsdp` binary: exit codes, report JSON, file
//! outputs, and byte-level determinism of generated instances and traces.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mpcsdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpcsdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stdout not JSON ({e}): {text}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn feasible_solve_writes_solution_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("planted.json");
    let sol = dir.path().join("x.json");
    let trace = dir.path().join("trace.csv");

    let out = mpcsdp(&[
        "generate",
        "planted-identity",
        "--n",
        "8",
        "--m",
        "6",
        "--seed",
        "3",
        "--output",
        path_str(&inst),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = mpcsdp(&[
        "solve",
        path_str(&inst),
        "--epsilon",
        "0.1",
        "--solution",
        path_str(&sol),
        "--trace",
        path_str(&trace),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = stdout_json(&out);
    assert_eq!(report["status"], "feasible");
    assert_eq!(report["x"].as_array().unwrap().len(), 6);
    assert!(report["iterations"].as_u64().unwrap() > 0);

    let trace_text = fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("iter,g,global,min_local,argmin_j,"));
    assert!(trace_text.lines().count() > 1, "trace has records");

    // The written solution passes verification against the same file.
    let out = mpcsdp(&["verify", path_str(&inst), path_str(&sol), "--relax", "1.9"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = stdout_json(&out);
    assert_eq!(report["status"], "verified");
    assert_eq!(report["ok"], true);
}

#[test]
fn planted_witness_verifies_unrelaxed() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("planted.json");
    let sol = dir.path().join("witness.json");

    let out = mpcsdp(&[
        "generate",
        "planted-general",
        "--n",
        "6",
        "--m",
        "5",
        "--seed",
        "12",
        "--singular",
        "--output",
        path_str(&inst),
    ]);
    assert!(out.status.success());

    let file: Value = serde_json::from_str(&fs::read_to_string(&inst).unwrap()).unwrap();
    let witness = file["witness"]
        .as_array()
        .expect("generated file carries its witness");
    fs::write(&sol, serde_json::json!({ "x": witness }).to_string()).unwrap();

    let out = mpcsdp(&["verify", path_str(&inst), path_str(&sol), "--relax", "1.0"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stdout_json(&out)["ok"], true);
}

#[test]
fn infeasible_instance_exits_two_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("margin.json");

    let out = mpcsdp(&[
        "generate",
        "margin-infeasible",
        "--n",
        "6",
        "--m",
        "4",
        "--seed",
        "1",
        "--margin",
        "2.0",
        "--epsilon",
        "0.05",
        "--output",
        path_str(&inst),
    ]);
    assert!(out.status.success());

    let out = mpcsdp(&["solve", path_str(&inst), "--epsilon", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
    let report = stdout_json(&out);
    assert_eq!(report["status"], "infeasible");
    assert_eq!(report["cause"]["kind"], "ratio-witness");
    assert!(
        report["cause"]["min_local"].as_f64().unwrap()
            > report["cause"]["global"].as_f64().unwrap()
    );
}

#[test]
fn generated_files_and_traces_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = mpcsdp(&[
            "generate",
            "planted-identity",
            "--n",
            "8",
            "--m",
            "6",
            "--seed",
            "7",
            "--output",
            path_str(path),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let ta = dir.path().join("a.csv");
    let tb = dir.path().join("b.csv");
    for trace in [&ta, &tb] {
        let out = mpcsdp(&["solve", path_str(&a), "--trace", path_str(trace)]);
        assert_eq!(out.status.code(), Some(0));
    }
    let bytes = fs::read(&ta).unwrap();
    assert_eq!(bytes, fs::read(&tb).unwrap());
    assert!(!bytes.is_empty());
}

#[test]
fn malformed_files_exit_one_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("broken.json");

    // Structurally valid JSON with the covering block missing.
    fs::write(
        &inst,
        r#"{"format_version":1,"problem":"feasibility","m":1,"n_p":1,
            "packing":[[1.0]],"packing_target":[1.0]}"#,
    )
    .unwrap();
    let out = mpcsdp(&["solve", path_str(&inst)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("n_c"),
        "stderr should name the missing field: {err}"
    );

    // Unknown fields are rejected, not silently dropped.
    fs::write(
        &inst,
        r#"{"format_version":1,"problem":"feasibility","m":1,"n_p":1,"n_c":1,
            "packing":[[1.0]],"packing_target":[1.0],
            "covering":[[1.0]],"covering_target":[1.0],"bogus":true}"#,
    )
    .unwrap();
    let out = mpcsdp(&["solve", path_str(&inst)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("bogus"),
        "stderr should name the unknown field: {err}"
    );

    // A packing matrix that is not PSD is named with its index.
    fs::write(
        &inst,
        r#"{"format_version":1,"problem":"feasibility","m":1,"n_p":1,"n_c":1,
            "packing":[[-1.0]],"packing_target":[1.0],
            "covering":[[1.0]],"covering_target":[1.0]}"#,
    )
    .unwrap();
    let out = mpcsdp(&["solve", path_str(&inst)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("packing matrix") && err.contains("not PSD"),
        "stderr should blame the packing matrix: {err}"
    );

    // Missing file is a plain IO failure.
    let out = mpcsdp(&["solve", path_str(&dir.path().join("nope.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exhausted_budget_exits_three_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("planted.json");
    let trace = dir.path().join("trace.csv");

    let out = mpcsdp(&[
        "generate",
        "planted-identity",
        "--n",
        "8",
        "--m",
        "6",
        "--seed",
        "5",
        "--output",
        path_str(&inst),
    ]);
    assert!(out.status.success());

    let out = mpcsdp(&[
        "solve",
        path_str(&inst),
        "--max-iterations",
        "2",
        "--trace",
        path_str(&trace),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let report = stdout_json(&out);
    assert_eq!(report["status"], "budget-exhausted");
    assert_eq!(report["iterations"], 2);

    let lines = fs::read_to_string(&trace).unwrap().lines().count();
    assert_eq!(lines, 3, "header plus the two completed iterations");
}

#[test]
fn covering_level_solve_beats_the_planted_margin() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("level.json");
    let sol = dir.path().join("x.json");

    let out = mpcsdp(&[
        "generate",
        "planted-identity",
        "--n",
        "6",
        "--m",
        "4",
        "--seed",
        "9",
        "--covering-level",
        "--output",
        path_str(&inst),
    ]);
    assert!(out.status.success());

    let out = mpcsdp(&[
        "solve",
        path_str(&inst),
        "--epsilon",
        "0.1",
        "--solution",
        path_str(&sol),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = stdout_json(&out);
    assert_eq!(report["status"], "covering-level");
    let gamma = report["gamma"].as_f64().unwrap();
    assert!(
        gamma >= 1.25 * (1.0 - 1e-5),
        "level {gamma} below the planted 1.25"
    );

    // The answer covers gamma times the stored target.
    let out = mpcsdp(&[
        "verify",
        path_str(&inst),
        path_str(&sol),
        "--relax",
        "1.9",
        "--covering-scale",
        &format!("{gamma}"),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn objective_solve_reports_a_positive_value() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("objective.json");
    let sol = dir.path().join("x.json");

    let out = mpcsdp(&[
        "generate",
        "objective",
        "--n",
        "2",
        "--m",
        "2",
        "--seed",
        "4",
        "--output",
        path_str(&inst),
    ]);
    assert!(out.status.success());

    let out = mpcsdp(&[
        "solve",
        path_str(&inst),
        "--epsilon",
        "0.3",
        "--solution",
        path_str(&sol),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = stdout_json(&out);
    assert_eq!(report["status"], "objective");
    assert!(report["value"].as_f64().unwrap() > 0.0);

    // Probes ran at eps / 18, so the packing bound is 1 + eps / 2.
    let out = mpcsdp(&["verify", path_str(&inst), path_str(&sol), "--relax", "1.16"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = stdout_json(&out);
    assert_eq!(report["status"], "verified-objective");
    assert_eq!(report["ok"], true);
}

#[test]
fn rejected_accuracy_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("planted.json");
    let out = mpcsdp(&[
        "generate",
        "planted-identity",
        "--n",
        "4",
        "--m",
        "3",
        "--seed",
        "0",
        "--output",
        path_str(&inst),
    ]);
    assert!(out.status.success());

    let out = mpcsdp(&["solve", path_str(&inst), "--epsilon", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}
