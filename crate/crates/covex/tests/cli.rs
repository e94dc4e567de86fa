//! The `covex` binary: exit statuses, error messages and report shapes.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn covex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covex"))
        .args(args)
        .env_remove("RUST_LOG")
        .env_remove("COVEX_CHAT_ENDPOINT")
        .env_remove("COVEX_EMBEDDING_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn mini_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/mini/pipeline.toml")
        .display()
        .to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(covex(&["--help"]).status.code(), Some(0));
    let v = covex(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).starts_with("covex "));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(covex(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(covex(&["search", "--mode", "sideways"]).status.code(), Some(1));
    assert_eq!(covex(&["evaluate"]).status.code(), Some(1));
}

#[test]
fn invalid_configuration_exits_one() {
    let out = covex(&["--set", "fusion.alpha=1.5", "config"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("alpha"), "{}", stderr(&out));

    let out = covex(&["--set", "fusion.gamma=1", "config"]);
    assert_eq!(out.status.code(), Some(1));

    let out = covex(&["--config", "/nonexistent/covex.toml", "config"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn config_prints_the_effective_settings() {
    let out = covex(&["--config", &mini_config(), "--set", "generation.num_queries=12", "config"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: toml::Table = text.parse().expect("config output is TOML");
    assert_eq!(parsed["generation"]["num_queries"].as_integer(), Some(12));
    assert_eq!(parsed["bm25"]["k1"].as_float(), Some(0.9));
}

#[test]
fn later_stage_without_inputs_exits_two_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = format!("output_dir={}", dir.path().display());
    let out = covex(&["--config", &mini_config(), "--set", &out_dir, "fit-topics"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("covex ingest"), "{}", stderr(&out));
}

#[test]
fn alpha_only_applies_to_fused_search() {
    let out = covex(&["--config", &mini_config(), "search", "--mode", "text", "--alpha", "0.3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_writes_a_per_query_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run.trec");
    let qrels = dir.path().join("qrels.tsv");
    let report = dir.path().join("report.json");
    std::fs::write(&run, "q1 Q0 d1 1 3.0 t\nq1 Q0 d3 2 2.0 t\nq1 Q0 d2 3 1.0 t\nq2 Q0 d3 1 1.0 t\n").unwrap();
    std::fs::write(&qrels, "query-id\tcorpus-id\tscore\nq1\td1\t1\nq1\td2\t1\nq2\td3\t0\n").unwrap();
    let out = covex(&[
        "evaluate",
        "--run",
        run.to_str().unwrap(),
        "--qrels",
        qrels.to_str().unwrap(),
        "--output",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let close = |x: &Value, want: f64| (x.as_f64().unwrap() - want).abs() < 1e-12;
    assert!(close(&v["map"]["mean"], (1.0 + 2.0 / 3.0) / 2.0));
    assert!(close(&v["recall@100"]["per_query"]["q1"], 1.0));
    let ndcg = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
    assert!(close(&v["ndcg@10"]["mean"], ndcg));
    assert_eq!(v["excluded_queries"], serde_json::json!(["q2"]));
    assert!(v["map"]["per_query"].get("q2").is_none());
}

#[test]
fn evaluate_rejects_a_malformed_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run.trec");
    let qrels = dir.path().join("qrels.tsv");
    std::fs::write(&run, "q1 Q0 d1 1\n").unwrap();
    std::fs::write(&qrels, "q1\td1\t1\n").unwrap();
    let out = covex(&["evaluate", "--run", run.to_str().unwrap(), "--qrels", qrels.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("run.trec:1: expected 6 columns"), "{}", stderr(&out));
}
