use std::process::{Command, Output};

use serde_json::Value;

fn katalite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_katalite"))
        .args(args)
        .output()
        .expect("spawn katalite")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn bench_list_has_nine_rows() {
    let out = katalite(&["bench", "list", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["format_version"], 1);
    let rows = doc["benchmarks"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().any(|r| r["name"] == "two-phase-set"));
}

#[test]
fn synthesize_writes_a_design_that_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = katalite(&[
        "synthesize",
        "--spec",
        "bench:two-phase-set",
        "--deterministic",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let design = dir.path().join("two-phase-set.design.json");
    assert!(design.exists());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["outcome"], "found");

    let out = katalite(&[
        "verify",
        "--spec",
        "bench:two-phase-set",
        "--design",
        design.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["verdict"], "pass");
}

#[test]
fn synthesize_all_writes_numbered_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = katalite(&[
        "synthesize",
        "--spec",
        "bench:two-phase-set",
        "--all",
        "2",
        "--deterministic",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("two-phase-set.design.json").exists());
    assert!(dir.path().join("two-phase-set.2.design.json").exists());
}

#[test]
fn exhausted_search_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = katalite(&[
        "synthesize",
        "--spec",
        "bench:grow-only-counter",
        "--max-depth",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn verify_reports_a_minimal_counterexample() {
    let out = katalite(&[
        "verify",
        "--spec",
        "bench:two-phase-set",
        "--design",
        "builtin:naive-set",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let doc = json(&out);
    assert_eq!(doc["result"]["verdict"], "fail");
    assert_eq!(doc["result"]["log"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_flags_the_naive_set() {
    let out = katalite(&[
        "simulate",
        "--spec",
        "bench:two-phase-set",
        "--design",
        "builtin:naive-set",
        "--scenario",
        "fig1-left",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = katalite(&[
        "simulate",
        "--spec",
        "bench:two-phase-set",
        "--design",
        "builtin:two-phase-set-map",
        "--seed",
        "3",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["report"]["converged"], true);
    assert_eq!(doc["schedule"]["seed"], 3);
}

#[test]
fn spec_validate_normalizes_and_rejects() {
    let out = katalite(&[
        "spec",
        "validate",
        "--spec",
        "bench:lww-register",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["valid"], true);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.spec.json");
    let mut spec = doc["spec"].clone();
    spec["query"] = serde_json::json!({ "Var": "nowhere" });
    std::fs::write(&path, spec.to_string()).unwrap();
    let out = katalite(&["spec", "validate", "--spec", path.to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn grammar_dump_lists_candidates() {
    let out = katalite(&[
        "grammar",
        "dump",
        "--spec",
        "bench:two-phase-set",
        "--role",
        "query",
        "--state",
        "Map<OpaqueInt, OrBool>",
        "--depth",
        "2",
        "--grammar-stats",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert!(!doc["candidates"].as_array().unwrap().is_empty());
    assert_eq!(doc["per_depth"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(
        katalite(&["verify", "--spec", "bench:two-phase-set"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        katalite(&["synthesize", "--spec", "bench:unknown"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        katalite(&[
            "verify",
            "--spec",
            "/no/such/file",
            "--design",
            "builtin:naive-set"
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(katalite(&["--version"]).status.code(), Some(0));
}

#[test]
fn pretty_and_json_describe_the_same_design() {
    let dir = tempfile::tempdir().unwrap();
    let run = |format: &str| {
        katalite(&[
            "synthesize",
            "--spec",
            "bench:two-phase-set",
            "--deterministic",
            "--format",
            format,
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
    };
    let doc = json(&run("json"));
    let file: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("two-phase-set.design.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(doc["designs"][0], file);
    let pretty = String::from_utf8(run("pretty").stdout).unwrap();
    assert!(pretty.contains("state: Map<OpaqueInt, OrBool>"), "{pretty}");
    let design = katalite::verifier::CrdtDesign::from_json(file).unwrap();
    let spec = katalite::seqspec::builtin_benchmark("two-phase-set").unwrap();
    assert!(pretty.contains(&design.render(&spec)), "{pretty}");
}
