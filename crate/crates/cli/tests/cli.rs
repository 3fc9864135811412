//! End-to-end tests of the `blockq` binary: output contents, exit codes,
//! table formats, and the exact-round-trip guarantee of emitted CSV.

use std::path::Path;
use std::process::{Command, Output};

fn blockq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn write_spec(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().to_string()
}

#[test]
fn model_prints_fork_probability() {
    let out = blockq(&[
        "model",
        "--mu",
        "0.1",
        "--lambda",
        "0.25",
        "--miners",
        "10",
        "--block-size",
        "5",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("p_fork   = 0.020046"), "{text}");
    assert!(text.contains("t_bc"), "{text}");
}

#[test]
fn single_miner_prints_zero_fork_probability() {
    let out = blockq(&["model", "--miners", "1"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("p_fork   = 0\n"));
}

#[test]
fn saturated_scenario_exits_with_model_unstable() {
    let out = blockq(&[
        "model",
        "--mu",
        "0.25",
        "--lambda",
        "0.1",
        "--block-size",
        "10",
        "--timer",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model-unstable"), "{err}");
    // the breakdown is still printed before the failure
    assert!(stdout(&out).contains("diag     = saturated"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(blockq(&["model", "--mu", "-1"]).status.code(), Some(1));
    assert_eq!(blockq(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(blockq(&["model", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(blockq(&["--help"]).status.code(), Some(0));
    assert_eq!(blockq(&["optimize", "--nodes", "2"]).status.code(), Some(1));
}

#[test]
fn missing_spec_file_exits_three() {
    let out = blockq(&["sweep", "/nonexistent/spec.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_is_byte_identical_for_fixed_seed() {
    let args = [
        "simulate",
        "--mu",
        "0.25",
        "--lambda",
        "0.25",
        "--miners",
        "10",
        "--seed",
        "42",
        "--sim-time",
        "5000",
        "--replications",
        "3",
    ];
    let a = blockq(&args);
    let b = blockq(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn simulate_single_miner_reports_zero_fork_rate() {
    let out = blockq(&[
        "simulate",
        "--miners",
        "1",
        "--sim-time",
        "5000",
        "--seed",
        "7",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("fork_rate                 = 0\n"));
}

#[test]
fn sweep_row_counts_follow_axes_and_backends() {
    let dir = tempfile::tempdir().unwrap();
    let grid: Vec<f64> = vec![0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0];
    let values = serde_json::to_string(&grid).unwrap();

    let spec = write_spec(
        dir.path(),
        "grid.json",
        &format!(r#"{{"axes": {{"mu": {values}, "lambda": {values}}}, "backends": ["model"]}}"#),
    );
    let out = blockq(&["sweep", &spec]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 50); // header + 7x7 rows

    let spec = write_spec(dir.path(), "base_only.json", r#"{"backends": ["model"]}"#);
    let out = blockq(&["sweep", &spec]);
    assert_eq!(stdout(&out).lines().count(), 2); // header + base scenario

    let spec = write_spec(
        dir.path(),
        "both.json",
        &format!(
            r#"{{"axes": {{"mu": {values}}}, "backends": ["both"], "seeds": [1], "sim_time": 200}}"#
        ),
    );
    let out = blockq(&["sweep", &spec]);
    assert_eq!(stdout(&out).lines().count(), 15); // header + 7 combos x 2 backends
}

#[test]
fn sweep_rejects_unknown_axis_and_oversized_grids() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "bad_axis.json",
        r#"{"axes": {"gamma": [1, 2]}}"#,
    );
    assert_eq!(blockq(&["sweep", &spec]).status.code(), Some(1));

    let big: Vec<f64> = (1..=1001).map(|i| i as f64 * 1e-3).collect();
    let values = serde_json::to_string(&big).unwrap();
    let spec = write_spec(
        dir.path(),
        "too_big.json",
        &format!(r#"{{"axes": {{"mu": {values}, "lambda": {values}}}}}"#),
    );
    assert_eq!(blockq(&["sweep", &spec]).status.code(), Some(1));
}

#[test]
fn sweep_csv_round_trips_every_float_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "rt.json",
        r#"{"axes": {"mu": [0.1, 0.25], "block_size": [1, 7]},
            "backends": ["both"], "seeds": [1, 2], "sim_time": 2000}"#,
    );
    let csv_path = dir.path().join("rows.csv");
    let out = blockq(&["sweep", &spec, "--output", csv_path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        header,
        [
            "mu", "lambda", "miners", "queue_size", "block_size", "timer", "backend",
            "seed_count", "t_q", "t_bg", "t_bp", "p_fork", "t_bc", "fork_rate", "drop_count",
            "diag"
        ]
    );
    let float_columns = [0, 1, 5, 8, 9, 10, 11, 12, 13, 14];
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), header.len());
        for &c in &float_columns {
            let field = fields[c];
            if field == "NaN" {
                continue;
            }
            let value: f64 = field.parse().unwrap();
            // re-serializing the parsed value reproduces the field exactly
            assert_eq!(format!("{value:.16e}"), field, "column {c}");
        }
        rows += 1;
    }
    assert_eq!(rows, 8);
}

#[test]
fn sweep_jsonl_format_emits_one_object_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "jsonl.json",
        r#"{"axes": {"mu": [0.1, 0.25]}, "backends": ["model"], "format": "jsonl"}"#,
    );
    let out = blockq(&["sweep", &spec]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 2);
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value.get("t_q").is_some());
        assert_eq!(value["backend"], "model");
    }
}

#[test]
fn concurrent_sweep_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "par.json",
        r#"{"axes": {"mu": [0.1, 0.2, 0.3, 0.4], "lambda": [0.25, 0.5], "block_size": [1, 5]},
            "backends": ["both"], "seeds": [1, 2], "sim_time": 1000}"#,
    );
    let a_path = dir.path().join("a.csv");
    let b_path = dir.path().join("b.csv");
    for (path, jobs) in [(&a_path, "4"), (&b_path, "1")] {
        let out = blockq(&[
            "sweep",
            &spec,
            "--output",
            path.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert!(out.status.success());
    }
    // different worker counts, identical bytes
    assert_eq!(
        std::fs::read(&a_path).unwrap(),
        std::fs::read(&b_path).unwrap()
    );
}

#[test]
fn validate_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("fig3.csv");
    let out = blockq(&[
        "validate",
        "fig3",
        "--sim-time",
        "1000",
        "--replications",
        "2",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("wrote 180 rows"), "{text}");
    assert!(text.contains("mean_rel_err"), "{text}");
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(report_text.lines().count(), 181);
    assert!(report_text.starts_with("mu,lambda,miners,queue_size,block_size,timer,seed_count,"));
}

#[test]
fn validate_rejects_unknown_preset() {
    assert_eq!(blockq(&["validate", "fig9"]).status.code(), Some(1));
}
