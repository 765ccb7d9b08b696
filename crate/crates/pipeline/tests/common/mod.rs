#![allow(dead_code)]

use std::path::{Path, PathBuf};

use kce_core::datasets::Benchmark;
use kce_pipeline::config::{Config, Settings};
use kce_pipeline::run::{run_usage, RunOptions, RunSummary, Runner};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn data_section(b: Benchmark) -> String {
    match b {
        Benchmark::Nq => format!("path = {:?}", fixture("nq.jsonl")),
        Benchmark::HotpotQa => format!("path = {:?}", fixture("hotpotqa.json")),
        Benchmark::StrategyQa => format!(
            "path = {:?}\nparagraphs = {:?}",
            fixture("strategyqa.json"),
            fixture("strategyqa_paragraphs.json")
        ),
        Benchmark::Qasc => format!("path = {:?}", fixture("qasc.jsonl")),
    }
}

/// Two mock models, both paraphrasing and reading.
pub fn config_text(b: Benchmark, readers: &[&str], paraphrasers: &[&str], limit: Option<usize>, parallelism: usize) -> String {
    let list = |xs: &[&str]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    let limit = limit.map(|l| format!("limit = {l}\n")).unwrap_or_default();
    format!(
        r#"benchmark = "{b}"
readers = [{readers}]
paraphrasers = [{paraphrasers}]
parallelism = {parallelism}
{limit}
[data]
{data}

[models.gpt]
provider = "mock"
model_id = "mock-gpt"

[models.claude]
provider = "mock"
model_id = "mock-claude"

[providers.mock]
kind = "mock"
synth = "heuristic"
"#,
        b = b.as_str(),
        readers = list(readers),
        paraphrasers = list(paraphrasers),
        data = data_section(b),
    )
}

pub fn settings(b: Benchmark, limit: Option<usize>, parallelism: usize) -> Settings {
    settings_with(b, &["gpt", "claude"], &["gpt", "claude"], limit, parallelism)
}

pub fn settings_with(b: Benchmark, readers: &[&str], paraphrasers: &[&str], limit: Option<usize>, parallelism: usize) -> Settings {
    Config::from_toml(&config_text(b, readers, paraphrasers, limit, parallelism))
        .expect("fixture config parses")
        .validate()
        .expect("fixture config is valid")
}

pub fn run_full(settings: Settings, run_dir: &Path) -> RunSummary {
    Runner::new(settings, Some(run_dir))
        .expect("runner")
        .run(&RunOptions::default())
        .expect("run succeeds")
}

/// Provider calls (not cache hits) recorded in the run directory.
pub fn provider_calls(run_dir: &Path) -> u64 {
    run_usage(run_dir).expect("usage").values().map(|t| t.calls).sum()
}

pub const REPORT_FILES: [&str; 6] = [
    "predictions.jsonl",
    "scores.csv",
    "report/results.csv",
    "report/table.md",
    "report/accordance.csv",
    "report/flips.jsonl",
];

pub fn artifacts(run_dir: &Path) -> Vec<(String, Vec<u8>)> {
    REPORT_FILES
        .iter()
        .map(|f| (f.to_string(), std::fs::read(run_dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"))))
        .collect()
}

pub fn digest(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(std::fs::read(path).expect("readable")))
}
