mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use kce_core::datasets::Benchmark;
use kce_pipeline::manifest::{JsonlLog, Stage};
use kce_pipeline::providers::{
    Client, FaultKind, MockTransport, ResponseCache, RetryPolicy, Sleeper, SynthRule,
};
use kce_pipeline::run::{load_instances, run_paraphrase, RunOptions, Runner, StageContext};

struct NoSleep;

impl Sleeper for NoSleep {
    fn sleep(&self, _: Duration) {}
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy { base_delay: Duration::ZERO, ..RetryPolicy::default() }
}

#[test]
fn resume_after_every_stage_boundary_matches_uninterrupted_run() {
    let reference = tempfile::tempdir().unwrap();
    run_full(settings(Benchmark::Nq, None, 4), reference.path());
    let want = digest(&reference.path().join("predictions.jsonl"));
    let calls = provider_calls(reference.path());

    for kill_after in [Stage::Ingest, Stage::Paraphrase, Stage::Read, Stage::Eval] {
        let dir = tempfile::tempdir().unwrap();
        let first = Runner::new(settings(Benchmark::Nq, None, 4), Some(dir.path()))
            .unwrap()
            .run(&RunOptions { resume: false, through: kill_after })
            .unwrap();
        assert!(first.is_complete());
        assert!(!first.manifest.stages.contains_key(&Stage::Report));
        let resumed = Runner::new(settings(Benchmark::Nq, None, 1), Some(dir.path()))
            .unwrap()
            .run(&RunOptions { resume: true, through: Stage::Report })
            .unwrap();
        assert!(resumed.is_complete());
        assert_eq!(digest(&dir.path().join("predictions.jsonl")), want, "killed after {kill_after:?}");
        assert_eq!(provider_calls(dir.path()), calls, "cells re-executed after {kill_after:?}");
        assert_eq!(artifacts(dir.path()), artifacts(reference.path()));
    }
}

#[test]
fn failed_cells_are_finished_by_resume() {
    let reference = tempfile::tempdir().unwrap();
    run_full(settings(Benchmark::HotpotQa, None, 2), reference.path());

    let dir = tempfile::tempdir().unwrap();
    // the question of hp-3 appears in its paraphrase and read prompts
    let flaky = MockTransport::new()
        .with_synth(SynthRule::Heuristic)
        .with_fault("which planet is the largest", FaultKind::Auth, 1)
        .with_fault("Which is mentioned together with Jupiter", FaultKind::Transient, 5);
    let partial = Runner::new(settings(Benchmark::HotpotQa, None, 2), Some(dir.path()))
        .unwrap()
        .with_transport("mock", Arc::new(flaky))
        .with_retry(fast_retry(), Arc::new(NoSleep))
        .run(&RunOptions::default())
        .unwrap();
    assert_eq!(partial.exit_code(), 2);
    assert!(!partial.manifest.is_complete(Stage::Paraphrase));
    assert!(!partial.manifest.incomplete_cells().is_empty());

    let done = Runner::new(settings(Benchmark::HotpotQa, None, 2), Some(dir.path()))
        .unwrap()
        .run(&RunOptions { resume: true, through: Stage::Report })
        .unwrap();
    assert_eq!(done.exit_code(), 0, "{:?}", done.manifest.incomplete_cells());
    assert_eq!(
        digest(&dir.path().join("predictions.jsonl")),
        digest(&reference.path().join("predictions.jsonl"))
    );
    assert_eq!(provider_calls(dir.path()), provider_calls(reference.path()));
}

#[test]
fn three_instances_one_failure_then_resume() {
    let settings = settings(Benchmark::Qasc, Some(3), 2);
    let instances = load_instances(&settings).unwrap().instances;
    assert_eq!(instances.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let calls = JsonlLog::new(dir.path().join("calls.jsonl"));
    let progress = JsonlLog::new(dir.path().join("progress.jsonl"));
    let ctx = StageContext {
        benchmark: settings.benchmark,
        templates: &settings.templates,
        demos: &settings.demos,
        parallelism: 2,
        calls: &calls,
    };
    let cache = ResponseCache::open(&dir.path().join("cache")).unwrap();
    let failing = MockTransport::new()
        .with_synth(SynthRule::Heuristic)
        .with_fault(&instances[1].question, FaultKind::Transient, 5);
    let client = Client::new("mock", Arc::new(failing), cache.clone())
        .with_retry(fast_retry())
        .with_sleeper(Arc::new(NoSleep));
    let p = &settings.paraphrasers[0];
    let out = run_paraphrase(&ctx, &client, p, &instances, &progress).unwrap();
    assert_eq!(out.done.len(), 2);
    assert_eq!(out.failed.len(), 1);
    assert_eq!(out.failed[0].0, instances[1].id);

    let healthy = Client::new("mock", Arc::new(MockTransport::new().with_synth(SynthRule::Heuristic)), cache);
    let out = run_paraphrase(&ctx, &healthy, p, &instances, &progress).unwrap();
    assert_eq!(out.done.len(), 3);
    assert!(out.failed.is_empty());
    assert_eq!(healthy.transport_calls(), 1);
}

#[test]
fn in_flight_calls_stay_within_the_bound() {
    for parallelism in [1, 3] {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(
            MockTransport::new()
                .with_synth(SynthRule::Heuristic)
                .with_delay(Duration::from_millis(5)),
        );
        Runner::new(settings(Benchmark::StrategyQa, Some(6), parallelism), Some(dir.path()))
            .unwrap()
            .with_transport("mock", mock.clone())
            .run(&RunOptions::default())
            .unwrap();
        assert!(mock.peak_in_flight() <= parallelism, "{} > {parallelism}", mock.peak_in_flight());
        assert!(mock.peak_in_flight() >= 1);
    }
}

#[test]
fn torn_progress_line_is_recovered() {
    let reference = tempfile::tempdir().unwrap();
    run_full(settings(Benchmark::Qasc, None, 2), reference.path());

    let dir = tempfile::tempdir().unwrap();
    Runner::new(settings(Benchmark::Qasc, None, 2), Some(dir.path()))
        .unwrap()
        .run(&RunOptions { resume: false, through: Stage::Paraphrase })
        .unwrap();
    let log = dir.path().join("progress/paraphrase/gpt.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    let cut = text.trim_end().rfind('\n').unwrap() + 1;
    text.truncate(cut + 10);
    std::fs::write(&log, text).unwrap();
    let done = Runner::new(settings(Benchmark::Qasc, None, 2), Some(dir.path()))
        .unwrap()
        .run(&RunOptions { resume: true, through: Stage::Report })
        .unwrap();
    assert!(done.is_complete());
    assert_eq!(artifacts(dir.path()), artifacts(reference.path()));
}
