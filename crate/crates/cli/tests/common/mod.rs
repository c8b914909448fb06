#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const GOLDEN_QUERY: &str =
    "Please analyze public opinion on Sina Weibo about the U.S. tariff on April 9, 2025";

pub const RUN_ARTIFACTS: [&str; 7] = [
    "manifest.json",
    "Collected_data.csv",
    "Sentiment_analysis_result.csv",
    "Topic_extraction_result.csv",
    "Aggregated_topics.csv",
    "report.txt",
    "ledger.jsonl",
];

/// Artifacts that must be identical across runs of the same fixture.
pub const DETERMINISTIC_ARTIFACTS: [&str; 7] = [
    "Collected_data.csv",
    "Sentiment_analysis_result.csv",
    "Topic_extraction_result.csv",
    "Aggregated_topics.csv",
    "Topic_mapping.csv",
    "report.txt",
    "report.json",
];

pub fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture() -> PathBuf {
    workspace().join("fixtures/tariff")
}

pub fn prompts() -> PathBuf {
    workspace().join("prompts")
}

pub fn opinionflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opinionflow"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// `opinionflow run` against the golden fixture with extra flags appended.
pub fn golden_run(query: &str, out: &Path, run_id: &str, pages: &Path, extra: &[&str]) -> Output {
    scripted_run(query, out, run_id, &fixture().join("mock"), pages, extra)
}

/// Like [`golden_run`] with a different mock script directory.
pub fn scripted_run(query: &str, out: &Path, run_id: &str, mock: &Path, pages: &Path, extra: &[&str]) -> Output {
    let prompts = prompts();
    let mut args = vec![
        "run",
        query,
        "--prompts",
        prompts.to_str().unwrap(),
        "--backend",
        "mock",
        "--mock-dir",
        mock.to_str().unwrap(),
        "--transport",
        "fixture",
        "--fixture-dir",
        pages.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--run-id",
        run_id,
    ];
    args.extend_from_slice(extra);
    opinionflow(&args)
}

pub fn run_dir(out: &Path, run_id: &str) -> PathBuf {
    out.join("runs").join(run_id)
}

pub fn manifest(out: &Path, run_id: &str) -> Value {
    let text = fs::read_to_string(run_dir(out, run_id).join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn stage_status(manifest: &Value, stage: &str) -> String {
    manifest["stages"][stage]["status"].as_str().unwrap_or("").to_string()
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Names of the deterministic artifacts whose bytes differ between two runs.
pub fn differing_artifacts(a: &Path, b: &Path) -> Vec<String> {
    DETERMINISTIC_ARTIFACTS
        .iter()
        .filter(|name| fs::read(a.join(name)).ok() != fs::read(b.join(name)).ok())
        .map(|s| s.to_string())
        .collect()
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}
