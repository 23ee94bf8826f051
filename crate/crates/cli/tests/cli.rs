use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn corpus() -> PathBuf {
    core_dir().join("data/corpus.jsonl")
}

fn fixture(name: &str) -> PathBuf {
    core_dir().join("tests/fixtures").join(name)
}

fn mlm_audit(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlm-audit"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("MLM_AUDIT_ENDPOINT")
        .env_remove("MLM_AUDIT_CONFIG")
        .output()
        .expect("binary runs")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn replay_config(dir: &Path, corpus: &Path, mono_replay: &Path) -> PathBuf {
    let text = format!(
        r#"
config_version = 1
corpus = {corpus:?}
output_dir = {out:?}

[[models]]
model_id = "synth-mono"
family = "bert-like"
multilingual = false
paired_with = "synth-multi"
backend = {{ kind = "replay", path = {mono:?} }}

[[models]]
model_id = "synth-multi"
family = "bert-like"
multilingual = true
paired_with = "synth-mono"
backend = {{ kind = "replay", path = {multi:?} }}
"#,
        corpus = corpus.display().to_string(),
        out = dir.join("out").display().to_string(),
        mono = mono_replay.display().to_string(),
        multi = fixture("synth-multi.replay.jsonl").display().to_string(),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_accepts_fixture_config() {
    let output = mlm_audit(&fixture("replay.toml"), &["validate"]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("700 job, 60 linguistic prompts"));
}

#[test]
fn full_run_writes_every_report_format() {
    let dir = tempfile::tempdir().unwrap();
    let config = replay_config(dir.path(), &corpus(), &fixture("synth-mono.replay.jsonl"));
    for model in ["synth-mono", "synth-multi"] {
        for command in ["audit-pronouns", "audit-tokens"] {
            let output = mlm_audit(&config, &[command, "--model", model]);
            assert!(
                output.status.success(),
                "{command} {model}: {}",
                stderr(&output)
            );
        }
    }
    let output = mlm_audit(
        &config,
        &["compare", "--mono", "synth-mono", "--multi", "synth-multi"],
    );
    assert!(output.status.success(), "{}", stderr(&output));
    assert_eq!(stdout(&output).lines().count(), 7);

    let report_dir = dir.path().join("report");
    let output = mlm_audit(
        &config,
        &[
            "report",
            "--out",
            report_dir.to_str().unwrap(),
            "--format",
            "structured",
            "--format",
            "csv",
            "--format",
            "markdown",
        ],
    );
    assert!(output.status.success(), "{}", stderr(&output));
    for name in [
        "report.json",
        "statistics.csv",
        "deltas.csv",
        "pairs.csv",
        "report.md",
    ] {
        assert!(report_dir.join(name).is_file(), "{name} missing");
    }
    let statistics = std::fs::read_to_string(report_dir.join("statistics.csv")).unwrap();
    assert_eq!(statistics.lines().count(), 1 + 14);
    assert!(!dir.path().join("out/progress").exists());
}

#[test]
fn wrong_prompt_counts_exit_2_naming_the_category() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(corpus()).unwrap();
    let mut dropped = false;
    let trimmed: Vec<&str> = text
        .lines()
        .filter(|line| {
            if !dropped && line.contains("\"id\":\"job-fashion-") {
                dropped = true;
                return false;
            }
            true
        })
        .collect();
    let bad_corpus = dir.path().join("corpus.jsonl");
    let text =
        (trimmed.join("\n") + "\n").replacen("\"job-pronoun\":700", "\"job-pronoun\":699", 1);
    std::fs::write(&bad_corpus, text).unwrap();
    let config = replay_config(dir.path(), &bad_corpus, &fixture("synth-mono.replay.jsonl"));
    let output = mlm_audit(&config, &["validate"]);
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
    assert!(stderr(&output).contains("Fashion"), "{}", stderr(&output));
}

#[test]
fn unknown_family_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = replay_config(dir.path(), &corpus(), &fixture("synth-mono.replay.jsonl"));
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replacen("bert-like", "gpt-like", 1);
    std::fs::write(&config, text).unwrap();
    let output = mlm_audit(&config, &["validate"]);
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
    assert!(stderr(&output).contains("gpt-like"), "{}", stderr(&output));
}

#[test]
fn replay_cache_miss_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.replay.jsonl");
    std::fs::write(&empty, "").unwrap();
    let config = replay_config(dir.path(), &corpus(), &empty);
    let output = mlm_audit(&config, &["audit-pronouns", "--model", "synth-mono"]);
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));
    assert!(
        stderr(&output).contains("cache miss"),
        "{}",
        stderr(&output)
    );
}

#[test]
fn compare_without_statistics_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = replay_config(dir.path(), &corpus(), &fixture("synth-mono.replay.jsonl"));
    let output = mlm_audit(
        &config,
        &["compare", "--mono", "synth-mono", "--multi", "synth-multi"],
    );
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
    assert!(
        stderr(&output).contains("audit-pronouns"),
        "{}",
        stderr(&output)
    );
}

#[test]
fn compare_rejects_reversed_pair() {
    let dir = tempfile::tempdir().unwrap();
    let config = replay_config(dir.path(), &corpus(), &fixture("synth-mono.replay.jsonl"));
    let output = mlm_audit(
        &config,
        &["compare", "--mono", "synth-multi", "--multi", "synth-mono"],
    );
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
}

#[test]
fn unknown_model_exits_2() {
    let output = mlm_audit(
        &fixture("replay.toml"),
        &["audit-pronouns", "--model", "nope"],
    );
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
}
