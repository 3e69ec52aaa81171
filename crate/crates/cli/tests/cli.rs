use std::process::{Command, Output};

use serde_json::Value;

fn takeover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_takeover")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn user_errors_exit_one_with_json_on_stderr() {
    for args in [
        &["simulate", "--config", "missing.json"][..],
        &["simulate", "--config", "study3", "--policy", "time_pressured:7"],
        &["report", "--log", "missing.jsonl"],
    ] {
        let out = takeover(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert!(err["error"].is_string() && err["message"].is_string(), "{err}");
    }
    assert_eq!(takeover(&["replicate", "study9"]).status.code(), Some(1));
    assert_eq!(takeover(&["--help"]).status.code(), Some(0));
}

#[test]
fn trials_stream_matches_the_preset() {
    let out = takeover(&["trials", "--config", "study4", "--seed", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("trial_id,task,p_announced,suggestion,truth,time_budget_s,drive_phase_s")
    );
    assert_eq!(lines.count(), 18);
}

#[test]
fn simulate_writes_report_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let json = dir.path().join("r.json");
    let out = takeover(&[
        "simulate", "--config", "study2", "--policy", "follow", "--drivers", "20",
        "--out", csv.to_str().unwrap(), "--json", json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let overall: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&overall[..5], ["simulate", "all", "all", "all", "all"]);
    assert_eq!(overall[5], "720");
    assert_eq!(overall[11], "1.0000");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["drivers"], 20);
}

#[test]
fn presets_json_lists_three_tasks() {
    let out = takeover(&["presets", "--format", "json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
}
