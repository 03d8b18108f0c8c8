use std::fs;
use std::path::Path;
use std::process::Command;

use mergebo_core::{RankingSubmission, Session, SessionConfig};

const QUICK_TOML: &str = r#"
t1 = 2
t2 = 2
raw_samples = 64
restarts = 2
mc_base_samples = 32
warmup = 20
posterior_samples = 20
ascent_iters = 30
"#;

fn mergebo(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mergebo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn suite_is_written_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.json");
    mergebo(&["bench", "suite", "--n", "20", "--seed", "4", "--out", s(&path)]);
    let cases: Vec<serde_json::Value> = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    assert_eq!(cases.len(), 30);
    assert_eq!(cases[0]["alpha_gt"].as_array().unwrap().len(), 20);

    let stdout = mergebo(&["bench", "suite", "--suite-seed", "4"]).stdout;
    let again: Vec<serde_json::Value> = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(again, cases);
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("quick.toml");
    fs::write(&config, QUICK_TOML).unwrap();
    let cases = dir.path().join("cases.json");
    mergebo(&["bench", "suite", "--seed", "1", "--out", s(&cases)]);
    let mut suite: Vec<serde_json::Value> = serde_json::from_slice(&fs::read(&cases).unwrap()).unwrap();
    suite.truncate(2);
    fs::write(&cases, serde_json::to_vec(&suite).unwrap()).unwrap();
    let csv = dir.path().join("runs.csv");
    let json = dir.path().join("summary.json");
    mergebo(&[
        "--config",
        s(&config),
        "bench",
        "run",
        "--methods",
        "cyclic_cd,random_dir",
        "--cases",
        s(&cases),
        "--seeds",
        "1",
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "case_id,method,seed,iteration,best_similarity,f1,num_active,renders_used,wall_ms"
    );
    // 2 methods x 2 cases x (initial + 4 iterations)
    assert_eq!(lines.count(), 2 * 2 * 5);

    mergebo(&["bench", "report", "--in", s(&csv), "--out", s(&json)]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    let methods = summary["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    for m in methods {
        assert_eq!(m["runs"], 2);
        assert_eq!(m["final_renders"], serde_json::json!([5 + 4 * 8, 5 + 4 * 8]));
    }
    assert!(summary["missing"].as_array().unwrap().is_empty());
}

#[test]
fn replay_reports_session_state() {
    let config: SessionConfig = SessionConfig::from_toml_str(QUICK_TOML).unwrap();
    let mut session = Session::start(config).unwrap();
    let batch = session.pending().unwrap().clone();
    let first = batch.samples[2];
    let mut ranked = vec![first];
    ranked.extend(batch.samples.iter().copied().filter(|&id| id != first).take(4));
    session
        .submit(&RankingSubmission {
            token: Some(batch.token),
            displayed: batch.samples.clone(),
            ranked_top: ranked,
        })
        .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.jsonl");
    session.write_transcript(fs::File::create(&path).unwrap()).unwrap();
    let out = mergebo(&["replay", s(&path)]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["renders"], session.renders_requested());
    assert_eq!(report["best_id"], serde_json::json!(first));
    assert_eq!(report["finished"], false);
}

#[test]
fn case_count_selects_a_subset() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("quick.toml");
    fs::write(&config, QUICK_TOML).unwrap();
    let csv = dir.path().join("runs.csv");
    mergebo(&[
        "--config",
        s(&config),
        "bench",
        "run",
        "--methods",
        "random_cd",
        "--cases",
        "3",
        "--suite-seed",
        "2",
        "--seeds",
        "2",
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut runs: Vec<(&str, &str)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap(), f.nth(1).unwrap())
        })
        .collect();
    runs.dedup();
    assert_eq!(runs.len(), 3 * 2);
}

#[test]
fn bad_arguments_fail() {
    let out = Command::new(env!("CARGO_BIN_EXE_mergebo"))
        .args(["bench", "run", "--methods", "nope", "--out", "x.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
