//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dialogsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
topics = ["SafeSex", "Consent"]
dialogues_per_scenario = 2
max_turns = 4
master_seed = 42
scenarios_per_cell = 1

[provider]
kind = "mock"
"#,
    )
    .unwrap();
    path
}

#[test]
fn synthesize_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_a = dir.path().join("a.jsonl");
    let out_b = dir.path().join("b.jsonl");

    let status = run(&[
        "synthesize",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    // 2 topics x 4 moments x 1 per cell
    let lines = std::fs::read_to_string(&out_a).unwrap();
    assert_eq!(lines.lines().count(), 8);

    let status = run(&[
        "synthesize",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
}

#[test]
fn generate_writes_records_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let scenarios = dir.path().join("scenarios.jsonl");
    run(&["synthesize", "--config", config.to_str().unwrap(), "--out", scenarios.to_str().unwrap()]);

    let out_dir = dir.path().join("run");
    let status = run(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let records = std::fs::read_to_string(out_dir.join("records.jsonl")).unwrap();
    // 8 scenarios x 2 dialogues
    assert_eq!(records.lines().count(), 16);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["dialogue_count"], 16);
    assert_eq!(manifest["failure_count"], 0);
    assert_eq!(manifest["master_seed"], 42);
    assert!(!out_dir.join("quarantine.jsonl").exists());
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();

    // config class: invalid TOML
    let bad_config = dir.path().join("bad.toml");
    std::fs::write(&bad_config, "topics = 7").unwrap();
    let out = run(&[
        "synthesize",
        "--config",
        bad_config.to_str().unwrap(),
        "--out",
        dir.path().join("x.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // config class: invalid topic name
    let bad_topic = dir.path().join("topic.toml");
    std::fs::write(&bad_topic, "topics = [\"Astronomy\"]\n[provider]\nkind = \"mock\"\n").unwrap();
    let out = run(&[
        "synthesize",
        "--config",
        bad_topic.to_str().unwrap(),
        "--out",
        dir.path().join("y.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));

    // input class: corrupted scenario line, named by line number
    let config = write_config(dir.path());
    let scenarios = dir.path().join("broken.jsonl");
    std::fs::write(&scenarios, "{\"not\": \"a scenario\"\n").unwrap();
    let out = run(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--out-dir",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    // input class: empty record file for stats
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = run(&["stats", "--records", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stats_and_evaluate_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let scenarios = dir.path().join("scenarios.jsonl");
    run(&["synthesize", "--config", config.to_str().unwrap(), "--out", scenarios.to_str().unwrap()]);
    let out_dir = dir.path().join("run");
    run(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let records = out_dir.join("records.jsonl");

    let a = run(&[
        "stats",
        "--records",
        records.to_str().unwrap(),
        "--scenarios",
        scenarios.to_str().unwrap(),
    ]);
    assert!(a.status.success());
    let b = run(&[
        "stats",
        "--records",
        records.to_str().unwrap(),
        "--scenarios",
        scenarios.to_str().unwrap(),
    ]);
    assert_eq!(a.stdout, b.stdout, "stats output must be stable across runs");
    let stats: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(stats["num_dialogues"], 16);

    let report_path = dir.path().join("report.json");
    let out = run(&[
        "evaluate",
        "--config",
        config.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--metrics",
        "stats,embedding-diversity,contradiction",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["stats"]["num_dialogues"].is_number());
    assert!(report["embedding_diversity"].is_number());
    assert!(report["contradiction_rate"].is_number());

    // diversity judging of a set against itself completes with full tallies
    let out = run(&[
        "evaluate",
        "--config",
        config.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--records-b",
        records.to_str().unwrap(),
        "--metrics",
        "judge-diversity",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let jd = &report["judge_diversity"];
    let total = jd["total"].as_u64().unwrap();
    let sum = jd["wins_a"].as_u64().unwrap()
        + jd["ties"].as_u64().unwrap()
        + jd["wins_b"].as_u64().unwrap()
        + jd["skips"].as_u64().unwrap();
    assert_eq!(total, sum);

    // unknown metric flag is a usage error
    let out = run(&[
        "evaluate",
        "--config",
        config.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--metrics",
        "nonsense",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
