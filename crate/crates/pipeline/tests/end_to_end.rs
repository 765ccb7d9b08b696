mod common;

use common::*;
use kce_core::datasets::Benchmark;
use kce_pipeline::manifest::Stage;
use kce_pipeline::run::{RunOptions, Runner};

fn expected_calls(instances: u64, paraphrasers: u64, readers: u64) -> u64 {
    instances * (paraphrasers + readers * (1 + paraphrasers))
}

#[test]
fn every_benchmark_runs_to_a_full_report() {
    for b in Benchmark::ALL {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_full(settings(b, None, 4), dir.path());
        assert!(summary.is_complete(), "{b}: {:?}", summary.manifest.stages);
        let n = summary.manifest.stages[&Stage::Ingest].cells_done as u64;
        assert_eq!(n, 10, "{b}");
        assert_eq!(provider_calls(dir.path()), expected_calls(n, 2, 2), "{b}");
        let preds = std::fs::read_to_string(dir.path().join("predictions.jsonl")).unwrap();
        assert_eq!(preds.lines().count(), 10 * 2 * 3, "{b}");
        let table = std::fs::read_to_string(dir.path().join("report/table.md")).unwrap();
        assert!(table.contains("Reader: gpt / Gold") && table.contains("Reader: claude / claude"), "{table}");
        assert!(table.contains("Average gap"), "{table}");
        for (name, _) in artifacts(dir.path()) {
            assert!(summary.manifest.artifacts.values().any(|p| *p == name), "{name} not in manifest");
        }
    }
}

#[test]
fn warm_cache_rerun_makes_no_calls() {
    let cache = tempfile::tempdir().unwrap();
    let with_cache = || {
        let mut s = settings(Benchmark::HotpotQa, None, 2);
        s.cache_dir = Some(cache.path().to_path_buf());
        s
    };
    let first = tempfile::tempdir().unwrap();
    run_full(with_cache(), first.path());
    let second = tempfile::tempdir().unwrap();
    run_full(with_cache(), second.path());
    assert_eq!(provider_calls(second.path()), 0);
    assert_eq!(artifacts(first.path()), artifacts(second.path()));
}

#[test]
fn limit_zero_gives_headers_only_report() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_full(settings(Benchmark::Qasc, Some(0), 4), dir.path());
    assert!(summary.is_complete());
    assert_eq!(provider_calls(dir.path()), 0);
    let results = std::fs::read_to_string(dir.path().join("report/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1);
    assert!(results.starts_with("benchmark,reader,condition"));
    let acc = std::fs::read_to_string(dir.path().join("report/accordance.csv")).unwrap();
    assert_eq!(acc.lines().count(), 1);
    assert_eq!(std::fs::read_to_string(dir.path().join("report/flips.jsonl")).unwrap(), "");
    assert_eq!(std::fs::read_to_string(dir.path().join("predictions.jsonl")).unwrap(), "");
}

#[test]
fn one_reader_report_has_no_gap_column() {
    let dir = tempfile::tempdir().unwrap();
    run_full(settings_with(Benchmark::StrategyQa, &["gpt"], &["gpt", "claude"], None, 4), dir.path());
    let table = std::fs::read_to_string(dir.path().join("report/table.md")).unwrap();
    assert!(!table.contains("| Average gap"), "{table}");
    assert!(table.contains("needs at least two readers"), "{table}");
}

#[test]
fn gold_predictions_do_not_depend_on_paraphrasing() {
    let with = tempfile::tempdir().unwrap();
    run_full(settings(Benchmark::Nq, None, 4), with.path());
    let without = tempfile::tempdir().unwrap();
    run_full(settings_with(Benchmark::Nq, &["gpt", "claude"], &[], None, 4), without.path());
    let gold = |dir: &std::path::Path| -> Vec<String> {
        std::fs::read_to_string(dir.join("predictions.jsonl"))
            .unwrap()
            .lines()
            .filter(|l| l.contains("\"condition\":\"gold\""))
            .map(str::to_string)
            .collect()
    };
    assert_eq!(gold(with.path()).len(), 20);
    assert_eq!(gold(with.path()), gold(without.path()));
}

#[test]
fn existing_run_dir_needs_resume() {
    let dir = tempfile::tempdir().unwrap();
    run_full(settings(Benchmark::Qasc, Some(2), 1), dir.path());
    let again = Runner::new(settings(Benchmark::Qasc, Some(2), 1), Some(dir.path())).unwrap();
    let err = again.run(&RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
    let changed = Runner::new(settings(Benchmark::Qasc, Some(3), 1), Some(dir.path())).unwrap();
    let err = changed.run(&RunOptions { resume: true, through: Stage::Report }).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}
