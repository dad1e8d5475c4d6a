use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rmlearn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmlearn")).current_dir(dir).args(args).output().expect("binary runs")
}

/// The status JSON is the last stderr line.
fn status(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().expect("status line")).expect("status is JSON")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn corridor_traces(dir: &Path) {
    let out = rmlearn(dir, &["simulate", "--env", "corridor", "--episodes", "8", "--seed", "3", "--out", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn infer_finds_the_two_state_corridor_machine() {
    let dir = tempfile::tempdir().unwrap();
    corridor_traces(dir.path());
    let out = rmlearn(
        dir.path(),
        &[
            "infer",
            "--traces",
            "c.jsonl",
            "--out-rm",
            "rm.json",
            "--out-dot",
            "rm.dot",
            "--dump-armdp",
            "a.json",
            "--self-check",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let s = status(&out);
    assert_eq!((s["k"].as_u64(), s["z"].as_u64(), s["status"].as_str()), (Some(2), Some(1), Some("feasible")));
    assert!(std::fs::read_to_string(dir.path().join("rm.dot")).unwrap().starts_with("digraph"));

    let verify = rmlearn(dir.path(), &["verify", "--traces", "c.jsonl", "--rm", "rm.json"]);
    assert_eq!(verify.status.code(), Some(0));
    assert!(stdout(&verify).lines().all(|l| l.ends_with("consistent")));
}

#[test]
fn too_few_states_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    corridor_traces(dir.path());
    let out = rmlearn(dir.path(), &["infer", "--traces", "c.jsonl", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(status(&out)["status"], "infeasible");
}

#[test]
fn conflict_free_traces_need_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let traces = concat!(
        "{\"version\":1,\"granularity\":\"state\"}\n",
        "{\"episode\":0,\"steps\":[{\"s\":0,\"a\":0,\"r\":\"0\",\"s_next\":1,\"terminal\":false},",
        "{\"s\":1,\"a\":0,\"r\":\"1\",\"s_next\":2,\"terminal\":true}]}\n",
    );
    std::fs::write(dir.path().join("t.jsonl"), traces).unwrap();
    let out = rmlearn(dir.path(), &["infer", "--traces", "t.jsonl"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!((status(&out)["states"].as_u64(), status(&out)["z"].as_u64()), (Some(1), Some(0)));
}

#[test]
fn ground_truth_machine_catches_a_flipped_reward() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmlearn(
        dir.path(),
        &["simulate", "--env", "officeworld:b", "--episodes", "6", "--out", "b.jsonl", "--out-rm", "gt.json"],
    );
    assert_eq!(out.status.code(), Some(0));
    let ok = rmlearn(dir.path(), &["verify", "--traces", "b.jsonl", "--rm", "gt.json", "--env", "officeworld:b"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));

    let text = std::fs::read_to_string(dir.path().join("b.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = lines[1].replacen("\"r\":\"0\"", "\"r\":\"7\"", 1);
    std::fs::write(dir.path().join("bad.jsonl"), lines.join("\n") + "\n").unwrap();
    let bad = rmlearn(dir.path(), &["verify", "--traces", "bad.jsonl", "--rm", "gt.json", "--env", "officeworld:b"]);
    assert_eq!(bad.status.code(), Some(1));
    let first = stdout(&bad).lines().next().unwrap().to_string();
    assert!(first.starts_with("trajectory 1:") && first.contains("divergence at step"), "{first}");
}

#[test]
fn export_then_extract_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    corridor_traces(dir.path());
    let out = rmlearn(dir.path(), &["export-lp", "--traces", "c.jsonl", "--k", "2", "--out", "m.lp"]);
    assert_eq!(out.status.code(), Some(0));
    let lp = std::fs::read_to_string(dir.path().join("m.lp")).unwrap();
    assert!(lp.contains("Minimize") && lp.contains("Binary") && lp.trim_end().ends_with("End"));

    // Every variable named, all zero: parses, but violates the one-pair rows.
    let names: Vec<&str> =
        lp.split_whitespace().filter(|w| w.starts_with("It_") || w.starts_with("Ir_") || w.starts_with("O_")).collect();
    assert!(!names.is_empty());
    let zeros: String = names.iter().map(|n| format!("{n}=0\n")).collect();
    std::fs::write(dir.path().join("zero.txt"), zeros).unwrap();
    let out = rmlearn(dir.path(), &["extract", "--traces", "c.jsonl", "--k", "2", "--solution", "zero.txt"]);
    assert_eq!(out.status.code(), Some(1), "an all-zero assignment is not a solution");
}

#[test]
fn learn_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmlearn(
        dir.path(),
        &[
            "learn",
            "--env",
            "corridor",
            "--episodes",
            "300",
            "--out-dir",
            "run",
            "--solver-log",
            "log.txt",
            "--self-check",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = status(&out);
    assert_eq!((s["run_status"].as_str(), s["states"].as_u64()), (Some("completed"), Some(2)));
    for file in ["metrics.csv", "solves.csv", "rm.json", "rm.dot", "traces.jsonl", "config.txt", "armdp.json"] {
        assert!(dir.path().join("run").join(file).exists(), "{file}");
    }
}

#[test]
fn node_budget_reports_a_timeout() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmlearn(
        dir.path(),
        &[
            "learn",
            "--env",
            "breakfastworld:c",
            "--variant",
            "cumulative",
            "--budget-nodes",
            "20000",
            "--episodes",
            "2000",
            "--out-dir",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(status(&out)["run_status"], "timeout");
}

#[test]
fn schema_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "not json\n").unwrap();
    let out = rmlearn(dir.path(), &["infer", "--traces", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(status(&out)["status"], "schema_error");

    assert_eq!(rmlearn(dir.path(), &["infer"]).status.code(), Some(1));
    assert_eq!(rmlearn(dir.path(), &["infer", "--traces", "missing.jsonl"]).status.code(), Some(1));
    assert_eq!(rmlearn(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn experiment_aggregates_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmlearn(
        dir.path(),
        &[
            "experiment",
            "--env",
            "corridor",
            "--seeds",
            "3",
            "--episodes",
            "200",
            "--align",
            "first-conflict",
            "--out-dir",
            "exp",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(status(&out)["completed"], 3);
    let exp = dir.path().join("exp");
    for file in ["summary.json", "summary.txt", "curve.csv", "seed_0/metrics.csv", "seed_2/rm.json"] {
        assert!(exp.join(file).exists(), "{file}");
    }
}
