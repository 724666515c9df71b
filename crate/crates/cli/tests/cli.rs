use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy").join(file)
}

fn toy_args() -> Vec<String> {
    vec![
        "--kg".into(),
        toy("kg.tsv").display().to_string(),
        "--aliases".into(),
        toy("aliases.tsv").display().to_string(),
        "--provider".into(),
        format!("scripted:{}", toy("script.json").display()),
    ]
}

fn kgreason(args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgreason"))
        .args(args)
        .env_remove("KGREASON_CONFIG")
        .env_remove("KGREASON_VARIANT")
        .output()
        .expect("binary runs")
}

fn with(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn ask_prints_answer() {
    let out = kgreason(&with(toy_args(), &["ask", "Who founded the company Bob works for?"]));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().next(), Some("heidi"));
}

#[test]
fn ask_abstains_with_code_two() {
    let out = kgreason(&with(toy_args(), &["ask", "Who is Leo's brother?"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no answer"));
}

#[test]
fn explain_emits_trace_json() {
    let out = kgreason(&with(toy_args(), &["explain", "Which city is Acme Corporation located in?"]));
    assert_eq!(out.status.code(), Some(0));
    let trace: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(trace["variant"], "full");
    assert!(trace["stages"].as_array().is_some_and(|s| !s.is_empty()));
}

#[test]
fn query_prints_tsv() {
    let out = kgreason(&with(
        toy_args(),
        &["query", "MATCH (a {name: 'alice'})-[:friend_of]->(b) RETURN b"],
    ));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("b"));
    assert_eq!(lines.next(), Some("bob"));
}

#[test]
fn query_empty_result_prints_header_only() {
    let out = kgreason(&with(
        toy_args(),
        &["query", "MATCH (a {name: 'alice'})-[:capital_of]->(b) RETURN b"],
    ));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "b\n");
}

#[test]
fn query_parse_error_reports_offset() {
    let out = kgreason(&with(toy_args(), &["query", "MATCH (a RETURN a"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset"));
}

#[test]
fn missing_files_fail_before_work() {
    let out = kgreason(&[
        "--kg".into(),
        "/nonexistent/kg.tsv".into(),
        "--provider".into(),
        format!("scripted:{}", toy("script.json").display()),
        "ask".into(),
        "Who is Frank married to?".into(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/kg.tsv"));

    let out = kgreason(&with(
        vec!["--kg".into(), toy("kg.tsv").display().to_string(), "--provider".into(), "scripted:/nope.json".into()],
        &["ask", "Who is Frank married to?"],
    ));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_variant_is_rejected() {
    let out = kgreason(&with(toy_args(), &["--variant", "bogus", "ask", "Who is Frank married to?"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = kgreason(&with(
        toy_args(),
        &[
            "--out",
            dir.path().to_str().unwrap(),
            "eval",
            "--dataset",
            toy("questions.jsonl").to_str().unwrap(),
        ],
    ));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert_eq!(stdout(&out), md);
    assert_eq!(md.lines().count(), 2 + 4);
    assert!(md.contains("| full | 0.600 |"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_variant_selection() {
    let dir = tempfile::tempdir().unwrap();
    let run = |variants: &str| {
        kgreason(&with(
            toy_args(),
            &[
                "--out",
                dir.path().to_str().unwrap(),
                "--variant",
                variants,
                "eval",
                "--dataset",
                toy("questions.jsonl").to_str().unwrap(),
            ],
        ))
    };
    let out = run("full,io_prompt");
    assert_eq!(out.status.code(), Some(0));
    let labels: Vec<String> = stdout(&out).lines().skip(2).map(|l| l.split('|').nth(1).unwrap().trim().to_string()).collect();
    assert_eq!(labels, ["full", "io_prompt"]);
    let out = run("");
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "| Method |\n|---|\n");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["kg.tsv", "aliases.tsv", "script.json"] {
        std::fs::copy(toy(f), dir.path().join(f)).unwrap();
    }
    let config = dir.path().join("kgreason.toml");
    std::fs::write(
        &config,
        "kg = \"kg.tsv\"\naliases = \"aliases.tsv\"\nprovider = \"scripted:script.json\"\nvariant = \"io_prompt\"\n",
    )
    .unwrap();
    let cfg = config.display().to_string();
    let question = "Where is the company where Alice's friend works located?";

    let from_file = kgreason(&["--config".into(), cfg.clone(), "explain".into(), question.into()]);
    assert!(from_file.status.success() || from_file.status.code() == Some(2));
    let trace: serde_json::Value = serde_json::from_str(&stdout(&from_file)).unwrap();
    assert_eq!(trace["variant"], "io_prompt");

    let flag = kgreason(&[
        "--config".into(),
        cfg.clone(),
        "--variant".into(),
        "full".into(),
        "ask".into(),
        question.into(),
    ]);
    assert_eq!(flag.status.code(), Some(0));
    assert_eq!(stdout(&flag).lines().next(), Some("paris"));

    let env = Command::new(env!("CARGO_BIN_EXE_kgreason"))
        .args(["--config", &cfg, "explain", question])
        .env("KGREASON_VARIANT", "no_schema")
        .output()
        .unwrap();
    let trace: serde_json::Value = serde_json::from_str(&stdout(&env)).unwrap();
    assert_eq!(trace["variant"], "no_schema");
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "colour = \"blue\"\n").unwrap();
    let out = kgreason(&["--config".into(), config.display().to_string(), "query".into(), "MATCH (a) RETURN a".into()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn threshold_out_of_range_is_rejected() {
    let out = kgreason(&with(toy_args(), &["--relevance-threshold", "1.5", "ask", "Who is Frank married to?"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_is_callable_in_process() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut args = vec!["kgreason".to_string()];
    args.extend(with(toy_args(), &["ask", "Who is Frank married to?"]));
    assert_eq!(kgreason_cli::run(args, &mut out, &mut err), 0);
    assert_eq!(String::from_utf8(out).unwrap(), "grace\n");

    let mut out = Vec::new();
    assert_eq!(kgreason_cli::run(["kgreason", "--help"], &mut out, &mut err), 0);
    assert!(String::from_utf8(out).unwrap().contains("eval"));
}

#[test]
fn three_hop_query_returns_paris() {
    let out = kgreason(&with(
        toy_args(),
        &["query", "MATCH (a {name:'alice'})-[:friend_of]->(b)-[:works_at]->(c)-[:located_in]->(d) RETURN d"],
    ));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "d\nparis\n");
}

#[test]
fn trace_holds_one_schema_and_a_query() {
    let out = kgreason(&with(toy_args(), &["explain", "Where is the company where Alice's friend works located?"]));
    assert_eq!(out.status.code(), Some(0));
    let trace: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let stages = trace["stages"].as_array().unwrap();
    let schemas = stages.iter().filter(|s| s["stage"] == "schema").count();
    assert_eq!(schemas, 1);
    assert!(stages
        .iter()
        .any(|s| s["query"].as_str().is_some_and(|q| q.starts_with("MATCH "))));
    assert_eq!(trace["failure_stage"], serde_json::Value::Null);
}

#[test]
fn abstained_trace_marks_failure_stage() {
    let out = kgreason(&with(toy_args(), &["explain", "Who is Leo's brother?"]));
    assert_eq!(out.status.code(), Some(2));
    let trace: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(trace["failure_stage"].is_string());
}

#[test]
fn bad_dataset_line_fails_eval() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("bad.jsonl");
    std::fs::write(&dataset, "{\"id\":\"1\",\"question\":\"q\",\"answers\":[\"a\"]}\nnot json\n").unwrap();
    let out = kgreason(&with(
        toy_args(),
        &["--out", dir.path().to_str().unwrap(), "eval", "--dataset", dataset.to_str().unwrap()],
    ));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert!(!dir.path().join("report.md").exists());
}
