use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn arsent(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arsent"))
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn synth_then_prep_writes_the_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = arsent(dir.path(), &["synth", "--n", "100", "--seed", "3", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let prepared = dir.path().join("prepared");
    let out = arsent(dir.path(), &["prep", csv.to_str().unwrap(), "--out", prepared.to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["samples"], 100);
    assert_eq!(summary["splits"], serde_json::json!([60, 20, 20]));

    let lines = std::fs::read_to_string(prepared.join("processed.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 100);
    let splits: Value = serde_json::from_str(&std::fs::read_to_string(prepared.join("splits.json")).unwrap()).unwrap();
    assert_eq!(splits["test"].as_array().unwrap().len(), 20);
    let vocab: Value = serde_json::from_str(&std::fs::read_to_string(prepared.join("vocab.json")).unwrap()).unwrap();
    assert_eq!(vocab["size"], summary["vocab_size"]);
}

#[test]
fn failures_exit_one_with_a_json_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = arsent(dir.path(), &["report", "no-such-run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "unknown_run");
    assert!(err["error"].as_str().unwrap().contains("no-such-run"));

    let out = arsent(dir.path(), &["baseline", "--dataset", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["code"].is_string());
}
