mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;
use toolground_core::registry::ToolRegistry;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_toolground"));
    c.env_remove("TOOLGROUND_MANIFEST");
    c
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_config(rel: &str, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg("--config").arg(fixture(rel)).arg("--output").arg(out).args(extra).output().unwrap()
}

#[test]
fn case_study_finishes_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("toilet.json");
    let o = run_config("toilet/scenario.json", &trace, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("outcome: finished"), "{text}");
    assert!(text.contains("answer: 2"), "{text}");
    assert!(text.contains("rounds: 3"), "{text}");
    assert!(trace.exists());
}

#[test]
fn missing_world_fails_with_diagnostic() {
    let o = bin()
        .args(["run", "--world", "/no/such/world.json", "--question", "q", "--planner-script"])
        .arg(fixture("budget/never_finish.json"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("world not found"), "{}", stderr(&o));
}

#[test]
fn never_finishing_planner_exits_zero_at_round_limit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("budget/never_finish_scenario.json", &dir.path().join("t.json"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("outcome: max_rounds"));
    assert!(stdout(&o).contains("rounds: 15"));
}

#[test]
fn budget_exhaustion_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // A 2-second clock cannot fit the first round of the case study.
    let o = run_config("toilet/scenario.json", &dir.path().join("t.json"), &["--max-wall-clock", "2"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("outcome: budget_exhausted"), "{}", stdout(&o));
}

#[test]
fn same_seed_gives_identical_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert!(run_config("toilet/scenario.json", &a, &[]).status.success());
    assert!(run_config("toilet/scenario.json", &b, &[]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    assert!(run_config("toilet/scenario.json", &trace, &["--seed", "99"]).status.success());
    let t = toolground::io::read_traces(&trace).unwrap();
    assert_eq!(t[0].seed, 7);
}

#[test]
fn planner_sources_are_exclusive() {
    let o = bin()
        .args(["run", "--question", "q", "--planner-endpoint", "http://127.0.0.1:9/v1", "--world"])
        .arg(fixture("toilet/world.json"))
        .arg("--planner-script")
        .arg(fixture("budget/never_finish.json"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("mutually exclusive"), "{}", stderr(&o));
}

#[test]
fn trace_stats_reports_success_rate_and_buckets() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("four.json");
    assert!(run_config("stats/four_calls_scenario.json", &trace, &[]).status.success());
    let o = bin().args(["trace", "stats"]).arg(&trace).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tool calls: 4 (3 ok, success rate 0.7500)"), "{}", stdout(&o));

    let o = bin().args(["trace", "stats", "--csv"]).arg(&trace).output().unwrap();
    let csv = stdout(&o);
    assert!(csv.contains("tool_calls,1-4,1,1,1,1.0000"), "{csv}");
    assert!(csv.contains("rounds,1-4,1,1,1,1.0000"), "{csv}");
}

#[test]
fn trace_stats_on_nothing_is_empty() {
    let o = bin().args(["trace", "stats"]).output().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("traces: 0"));
}

#[test]
fn unreadable_trace_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"not\": \"a trace\"}\n").unwrap();
    let o = bin().args(["trace", "stats"]).arg(&bad).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad.jsonl"), "{}", stderr(&o));
}

#[test]
fn tools_count_uses_manifest_from_environment() {
    let o = bin().args(["tools", "count"]).output().unwrap();
    let text = stdout(&o);
    assert!(text.contains("total: 134") && text.contains("base: 26") && text.contains("meta: 108"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("manifest.json");
    let reg = ToolRegistry::default_library();
    let mut doc: serde_json::Value = serde_json::from_str(&reg.to_manifest_string()).unwrap();
    let tools = doc.get_mut("tools").and_then(|t| t.as_array_mut()).expect("manifest has a tools list");
    tools.truncate(3);
    std::fs::write(&small, doc.to_string()).unwrap();
    let o = bin().args(["tools", "count"]).env("TOOLGROUND_MANIFEST", &small).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("total: 3"), "{}", stdout(&o));

    let o = bin().args(["tools", "count"]).env("TOOLGROUND_MANIFEST", "/no/manifest.json").output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/no/manifest.json"));
}

#[test]
fn rl_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("toilet.json");
    assert!(run_config("toilet/scenario.json", &trace, &[]).status.success());
    let o = bin().args(["rl", "score"]).arg(&trace).output().unwrap();
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["r_ans"], 1.0);
    assert_eq!(line["total"], 1.1);

    let groups = dir.path().join("groups.jsonl");
    std::fs::write(&groups, "{\"group\": \"a\", \"rewards\": [1, 0, 0, 1]}\n{\"group\": \"b\", \"rewards\": [1, 1, 1, 1]}\n").unwrap();
    let o = bin().args(["rl", "advantages"]).arg(&groups).output().unwrap();
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    let a = lines[0]["advantages"].as_array().unwrap();
    assert!((a[0].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(lines[1]["skipped"], true);

    let (w, r) = (dir.path().join("w.json"), dir.path().join("r.json"));
    std::fs::write(&w, r#"{"easy": 0.5, "hard": 0.5}"#).unwrap();
    std::fs::write(&r, r#"{"easy": 1.0, "hard": 0.0}"#).unwrap();
    let o = bin().args(["rl", "reweight", "--weights"]).arg(&w).arg("--rewards").arg(&r).output().unwrap();
    let out: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(out["easy"], 0.25);
    assert_eq!(out["hard"], 0.75);
}
