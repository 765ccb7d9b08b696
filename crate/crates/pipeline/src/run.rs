//! Stage execution: ingest, paraphrase, read, eval, report.
//!
//! Paraphrase and read work is split into cells, one per (model, condition,
//! instance). A finished cell is appended to its progress log at once, so a
//! killed run loses at most the cells that were in flight, and a resumed run
//! skips everything already logged.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use kce_core::analysis::{emit_report, ReportInput};
use kce_core::datasets::{
    build_context, load_hotpotqa, load_nq, load_qasc, load_strategyqa, read_instances, write_instances,
    Benchmark, DatasetError, LoadOutcome, QAInstance, Skipped,
};
use kce_core::evaluation::{judge, normalize_answer, score_run, scores_csv, Condition, Prediction};
use kce_core::prompts::{render_paraphrase, render_read, Demonstration, Mode, TemplateSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigErrors, ModelRef, ProviderKind, Settings};
use crate::manifest::{
    condition_slug, file_digest, write_atomic, ConfigSnapshot, JsonlLog, RunManifest, Stage, StageMarker,
};
use crate::providers::{
    read_transcript, usage_report, AnthropicTransport, CacheError, CallLogEntry, Client, MockTransport, OpenAiTransport,
    ProviderError, RateLimiter, ResponseCache, RetryPolicy, Sleeper, ThreadSleeper, Transport, UsageReport,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("run directory {0} already holds a run; pass --resume to continue it")]
    Exists(PathBuf),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl RunError {
    /// 1 for usage and configuration problems, 3 for integrity failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Integrity(_) => 3,
            RunError::Cache(CacheError::Conflict { .. } | CacheError::Corrupt { .. }) => 3,
            _ => 1,
        }
    }
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue a run directory that already holds a manifest.
    pub resume: bool,
    /// Last stage to execute.
    pub through: Stage,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { resume: false, through: Stage::Report }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub through: Stage,
}

impl RunSummary {
    /// True when every stage up to `through` finished all of its cells.
    pub fn is_complete(&self) -> bool {
        Stage::ALL.iter().filter(|s| **s <= self.through).all(|s| self.manifest.is_complete(*s))
    }

    /// 0 when complete, 2 when some cells are left for a resume.
    pub fn exit_code(&self) -> i32 {
        if self.is_complete() {
            0
        } else {
            2
        }
    }
}

/// Loads the configured benchmark, drops NQ items that duplicate a
/// demonstration question, then shuffles (when enabled) and takes the limit.
pub fn load_instances(settings: &Settings) -> Result<LoadOutcome, DatasetError> {
    let mut outcome = match settings.benchmark {
        Benchmark::Nq => load_nq(&settings.data, None)?,
        Benchmark::HotpotQa => load_hotpotqa(&settings.data, settings.limit)?,
        Benchmark::StrategyQa => load_strategyqa(
            &settings.data,
            settings.paragraphs.as_deref().expect("validated: strategyqa has paragraphs"),
        )?,
        Benchmark::Qasc => load_qasc(&settings.data)?,
    };
    if settings.benchmark == Benchmark::Nq {
        let demo_questions: Vec<String> = settings.demos.iter().map(|d| normalize_answer(&d.question)).collect();
        let (kept, dropped): (Vec<_>, Vec<_>) = std::mem::take(&mut outcome.instances)
            .into_iter()
            .partition(|i| !demo_questions.contains(&normalize_answer(&i.question)));
        outcome.instances = kept;
        outcome.skipped.extend(dropped.into_iter().map(|i| Skipped {
            item: i.id,
            reason: "question duplicates a demonstration".to_string(),
        }));
    }
    if settings.shuffle {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(settings.seed);
        outcome.instances.shuffle(&mut rng);
    }
    if let Some(limit) = settings.limit {
        outcome.instances.truncate(limit);
    }
    Ok(outcome)
}

pub fn snapshot(settings: &Settings) -> Result<ConfigSnapshot, RunError> {
    let mut data_digests = BTreeMap::new();
    data_digests.insert(
        "data".to_string(),
        file_digest(&settings.data).map_err(io_ctx(settings.data.display().to_string()))?,
    );
    if let Some(p) = &settings.paragraphs {
        data_digests.insert("paragraphs".to_string(), file_digest(p).map_err(io_ctx(p.display().to_string()))?);
    }
    let demos = serde_json::to_vec(&settings.demos).expect("demos serialize");
    Ok(ConfigSnapshot {
        benchmark: settings.benchmark,
        data_digests,
        limit: settings.limit,
        seed: settings.seed,
        shuffle: settings.shuffle,
        paraphrasers: settings.paraphrasers.clone(),
        readers: settings.readers.clone(),
        template_checksum: settings.templates.checksum(),
        demos_checksum: hex::encode(Sha256::digest(demos)),
        parallelism: settings.parallelism,
    })
}

/// Shared inputs of the paraphrase and read stages.
pub struct StageContext<'a> {
    pub benchmark: Benchmark,
    pub templates: &'a TemplateSet,
    pub demos: &'a [Demonstration],
    pub parallelism: usize,
    pub calls: &'a JsonlLog,
}

/// What one model's pass over the instances produced.
#[derive(Debug)]
pub struct CellOutcome<T> {
    /// Instance id to result, including cells finished in earlier attempts.
    pub done: BTreeMap<String, T>,
    /// Instance id and reason for cells that did not finish.
    pub failed: Vec<(String, String)>,
    /// Cache conflicts or corruption; the run must stop.
    pub integrity: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ParaphraseRecord {
    instance_id: String,
    text: String,
}

fn for_each_parallel<T: Sync>(threads: usize, items: &[T], f: impl Fn(&T) + Sync) {
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                f(&items[i]);
            });
        }
    });
}

fn log_call(ctx: &StageContext<'_>, stage: Stage, r: &crate::providers::ProviderResponse) -> io::Result<()> {
    ctx.calls.append(&CallLogEntry {
        stage: stage.as_str().to_string(),
        provider: r.provider.clone(),
        model_id: r.model_id.clone(),
        key: r.key.clone(),
        cache_hit: r.cache_hit,
        usage: r.usage,
    })
}

/// Failed cells and integrity problems gathered by worker threads.
type ErrorSink = Mutex<(Vec<(String, String)>, Vec<String>)>;

fn note_error(out: &ErrorSink, id: &str, e: ProviderError) {
    let mut g = out.lock().expect("outcome lock");
    if e.is_integrity() {
        g.1.push(format!("{id}: {e}"));
    } else {
        g.0.push((id.to_string(), e.to_string()));
    }
}

/// Paraphrases the gold context of every instance not yet in `progress`.
pub fn run_paraphrase(
    ctx: &StageContext<'_>,
    client: &Client,
    paraphraser: &ModelRef,
    instances: &[QAInstance],
    progress: &JsonlLog,
) -> io::Result<CellOutcome<String>> {
    let mut done: BTreeMap<String, String> = BTreeMap::new();
    for r in progress.read::<ParaphraseRecord>()? {
        done.entry(r.instance_id).or_insert(r.text);
    }
    let todo: Vec<&QAInstance> = instances.iter().filter(|i| !done.contains_key(&i.id)).collect();
    let params = crate::providers::params_for(ctx.benchmark, Mode::Paraphrase).for_model(&paraphraser.model_id);
    let finished = Mutex::new(Vec::new());
    let errors = Mutex::new((Vec::new(), Vec::new()));
    let io_failure: Mutex<Option<io::Error>> = Mutex::new(None);
    for_each_parallel(ctx.parallelism, &todo, |inst| {
        let prompt = match render_paraphrase(ctx.templates, ctx.benchmark, &inst.question, &build_context(inst)) {
            Ok(p) => p.rendered,
            Err(e) => {
                errors.lock().expect("outcome lock").0.push((inst.id.clone(), e.to_string()));
                return;
            }
        };
        match client.complete(&prompt, &params) {
            Ok(r) => {
                let rec = ParaphraseRecord { instance_id: inst.id.clone(), text: r.text.clone() };
                if let Err(e) = log_call(ctx, Stage::Paraphrase, &r).and_then(|_| progress.append(&rec)) {
                    io_failure.lock().expect("io lock").get_or_insert(e);
                    return;
                }
                finished.lock().expect("done lock").push(rec);
            }
            Err(e) => note_error(&errors, &inst.id, e),
        }
    });
    if let Some(e) = io_failure.into_inner().expect("io lock") {
        return Err(e);
    }
    for r in finished.into_inner().expect("done lock") {
        done.insert(r.instance_id, r.text);
    }
    let (failed, integrity) = errors.into_inner().expect("outcome lock");
    Ok(CellOutcome { done, failed, integrity })
}

/// Reads every instance not yet in `progress` under `condition`. A
/// paraphrased condition needs `paraphrases`; instances without one are
/// reported as failed. An empty paraphrase yields an empty prediction
/// without a provider call.
pub fn run_read(
    ctx: &StageContext<'_>,
    client: &Client,
    reader: &ModelRef,
    condition: &Condition,
    instances: &[QAInstance],
    paraphrases: Option<&BTreeMap<String, String>>,
    progress: &JsonlLog,
) -> io::Result<CellOutcome<Prediction>> {
    let mut done: BTreeMap<String, Prediction> = BTreeMap::new();
    for p in progress.read::<Prediction>()? {
        done.entry(p.instance_id.clone()).or_insert(p);
    }
    let todo: Vec<&QAInstance> = instances.iter().filter(|i| !done.contains_key(&i.id)).collect();
    let params = crate::providers::params_for(ctx.benchmark, Mode::Read).for_model(&reader.model_id);
    let demos = (ctx.benchmark == Benchmark::Nq).then_some(ctx.demos);
    let finished = Mutex::new(Vec::new());
    let errors = Mutex::new((Vec::new(), Vec::new()));
    let io_failure: Mutex<Option<io::Error>> = Mutex::new(None);
    let record = |p: Prediction, response: Option<&crate::providers::ProviderResponse>| {
        let logged = match response {
            Some(r) => log_call(ctx, Stage::Read, r),
            None => Ok(()),
        };
        if let Err(e) = logged.and_then(|_| progress.append(&p)) {
            io_failure.lock().expect("io lock").get_or_insert(e);
            return;
        }
        finished.lock().expect("done lock").push(p);
    };
    for_each_parallel(ctx.parallelism, &todo, |inst| {
        let fail = |reason: String| errors.lock().expect("outcome lock").0.push((inst.id.clone(), reason));
        let context = match condition {
            Condition::Gold => build_context(inst),
            Condition::Paraphrased(alias) => match paraphrases.and_then(|m| m.get(&inst.id)) {
                Some(t) => t.clone(),
                None => return fail(format!("no paraphrase from `{alias}`")),
            },
        };
        let prediction = |raw: String| {
            let j = judge(ctx.benchmark, inst, &raw).expect("instance benchmark matches the run");
            Prediction {
                instance_id: inst.id.clone(),
                condition: condition.clone(),
                reader: reader.alias.clone(),
                raw_output: raw,
                extracted: j.extracted,
                correct: j.correct,
                note: j.note,
            }
        };
        if context.trim().is_empty() {
            let mut p = prediction(String::new());
            p.note = Some("empty paraphrase; reader not called".to_string());
            return record(p, None);
        }
        let prompt = match render_read(
            ctx.templates,
            ctx.benchmark,
            &inst.question,
            &context,
            demos,
            inst.choices.as_deref(),
        ) {
            Ok(p) => p.rendered,
            Err(e) => return fail(e.to_string()),
        };
        match client.complete(&prompt, &params) {
            Ok(r) => record(prediction(r.text.clone()), Some(&r)),
            Err(e) => note_error(&errors, &inst.id, e),
        }
    });
    if let Some(e) = io_failure.into_inner().expect("io lock") {
        return Err(e);
    }
    for p in finished.into_inner().expect("done lock") {
        done.insert(p.instance_id.clone(), p);
    }
    let (failed, integrity) = errors.into_inner().expect("outcome lock");
    Ok(CellOutcome { done, failed, integrity })
}

/// Drives a whole run inside one directory.
pub struct Runner {
    settings: Settings,
    run_dir: PathBuf,
    cache: ResponseCache,
    transports: BTreeMap<String, Arc<dyn Transport>>,
    limiters: BTreeMap<String, Arc<RateLimiter>>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
}

fn build_transport(name: &str, p: &crate::config::ProviderSettings) -> Result<Arc<dyn Transport>, RunError> {
    Ok(match p.kind {
        ProviderKind::OpenAi => Arc::new(OpenAiTransport::new(&p.endpoint, &p.api_key_env, p.timeout)),
        ProviderKind::Anthropic => Arc::new(AnthropicTransport::new(&p.endpoint, &p.api_key_env, p.timeout)),
        ProviderKind::Mock => {
            let mut m = MockTransport::new();
            if let Some(t) = &p.transcript {
                let entries = read_transcript(t)
                    .map_err(|e| RunError::Config(ConfigErrors(vec![format!("provider `{name}`: {e}")])))?;
                m = m.with_transcript(entries);
            }
            if let Some(rule) = &p.synth {
                m = m.with_synth(rule.clone());
            }
            Arc::new(m)
        }
    })
}

impl Runner {
    /// `run_dir` falls back to the configured one. The cache lives in
    /// `cache_dir`, or `<run_dir>/cache` when unset.
    pub fn new(settings: Settings, run_dir: Option<&Path>) -> Result<Self, RunError> {
        let run_dir = run_dir
            .map(Path::to_path_buf)
            .or_else(|| settings.run_dir.clone())
            .ok_or_else(|| RunError::Config(ConfigErrors(vec!["no run directory given".to_string()])))?;
        let cache_root = settings.cache_dir.clone().unwrap_or_else(|| run_dir.join("cache"));
        let cache = ResponseCache::open(&cache_root)?;
        let mut transports = BTreeMap::new();
        let mut limiters = BTreeMap::new();
        for (name, p) in &settings.providers {
            transports.insert(name.clone(), build_transport(name, p)?);
            if let Some(rpm) = p.requests_per_minute {
                limiters.insert(name.clone(), Arc::new(RateLimiter::new(rpm, p.burst)));
            }
        }
        Ok(Runner {
            settings,
            run_dir,
            cache,
            transports,
            limiters,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
        })
    }

    /// Replaces the transport behind one configured provider.
    pub fn with_transport(mut self, provider: &str, transport: Arc<dyn Transport>) -> Self {
        self.transports.insert(provider.to_string(), transport);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy, sleeper: Arc<dyn Sleeper>) -> Self {
        self.retry = retry;
        self.sleeper = sleeper;
        self
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    fn clients(&self) -> BTreeMap<String, Client> {
        self.transports
            .iter()
            .map(|(name, t)| {
                let mut c = Client::new(name, t.clone(), self.cache.clone())
                    .with_retry(self.retry.clone())
                    .with_sleeper(self.sleeper.clone())
                    .offline(self.settings.offline);
                if let Some(l) = self.limiters.get(name) {
                    c = c.with_limiter(l.clone());
                }
                (name.clone(), c)
            })
            .collect()
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
        write_atomic(&self.path(rel), bytes).map_err(io_ctx(rel.to_string()))
    }

    fn save(&self, manifest: &RunManifest) -> Result<(), RunError> {
        manifest.save(&self.run_dir).map_err(io_ctx("manifest"))
    }

    /// Executes (or resumes) the run through `options.through`.
    pub fn run(&self, options: &RunOptions) -> Result<RunSummary, RunError> {
        fs::create_dir_all(&self.run_dir).map_err(io_ctx(self.run_dir.display().to_string()))?;
        let snap = snapshot(&self.settings)?;
        let mut manifest = match RunManifest::load(&self.run_dir).map_err(io_ctx("manifest"))? {
            Some(_) if !options.resume => return Err(RunError::Exists(self.run_dir.clone())),
            Some(m) => {
                if !m.snapshot.same_run(&snap) {
                    return Err(RunError::Integrity(format!(
                        "configuration differs from the run recorded in {}",
                        self.run_dir.display()
                    )));
                }
                RunManifest { snapshot: snap, ..m }
            }
            None => RunManifest::new(snap),
        };
        let summary = |manifest: RunManifest| RunSummary { manifest, through: options.through };

        let instances = self.ingest(&mut manifest)?;
        self.save(&manifest)?;
        if options.through == Stage::Ingest {
            return Ok(summary(manifest));
        }

        let clients = self.clients();
        let calls = JsonlLog::new(self.path("calls.jsonl"));
        let ctx = StageContext {
            benchmark: self.settings.benchmark,
            templates: &self.settings.templates,
            demos: &self.settings.demos,
            parallelism: self.settings.parallelism,
            calls: &calls,
        };

        let paraphrases = self.paraphrase(&ctx, &clients, &instances, &mut manifest)?;
        self.save(&manifest)?;
        if options.through == Stage::Paraphrase {
            return Ok(summary(manifest));
        }

        let predictions = self.read(&ctx, &clients, &instances, &paraphrases, &mut manifest)?;
        self.save(&manifest)?;
        if options.through == Stage::Read {
            return Ok(summary(manifest));
        }

        self.eval(&instances, &predictions, &mut manifest)?;
        self.save(&manifest)?;
        if options.through == Stage::Eval {
            return Ok(summary(manifest));
        }

        self.report(&instances, &paraphrases, &predictions, &mut manifest)?;
        self.save(&manifest)?;
        Ok(summary(manifest))
    }

    fn ingest(&self, manifest: &mut RunManifest) -> Result<Vec<QAInstance>, RunError> {
        let path = self.path("instances.jsonl");
        if manifest.is_complete(Stage::Ingest) {
            let f = fs::File::open(&path).map_err(io_ctx(path.display().to_string()))?;
            return Ok(read_instances(io::BufReader::new(f), &path)?);
        }
        let outcome = load_instances(&self.settings)?;
        let mut buf = Vec::new();
        write_instances(&mut buf, &outcome.instances).map_err(io_ctx("instances"))?;
        self.write("instances.jsonl", &buf)?;
        let skipped: String = outcome
            .skipped
            .iter()
            .map(|s| serde_json::json!({"item": s.item, "reason": s.reason}).to_string() + "\n")
            .collect();
        self.write("ingest_skipped.jsonl", skipped.as_bytes())?;
        if !outcome.skipped.is_empty() {
            log::info!("ingest skipped {} item(s); see ingest_skipped.jsonl", outcome.skipped.len());
        }
        let n = outcome.instances.len();
        manifest
            .stages
            .insert(Stage::Ingest, StageMarker { complete: true, cells_total: n, cells_done: n, failed: vec![] });
        manifest.artifacts.insert("instances".into(), "instances.jsonl".into());
        manifest.artifacts.insert("ingest_skipped".into(), "ingest_skipped.jsonl".into());
        Ok(outcome.instances)
    }

    fn client<'c>(&self, clients: &'c BTreeMap<String, Client>, model: &ModelRef) -> &'c Client {
        clients.get(&model.provider).expect("validated: model providers exist")
    }

    fn paraphrase(
        &self,
        ctx: &StageContext<'_>,
        clients: &BTreeMap<String, Client>,
        instances: &[QAInstance],
        manifest: &mut RunManifest,
    ) -> Result<BTreeMap<String, BTreeMap<String, String>>, RunError> {
        let mut all = BTreeMap::new();
        let mut marker = StageMarker::default();
        let mut integrity = Vec::new();
        for p in &self.settings.paraphrasers {
            let log = JsonlLog::new(self.path(&format!("progress/paraphrase/{}.jsonl", p.alias)));
            let out = run_paraphrase(ctx, self.client(clients, p), p, instances, &log)
                .map_err(io_ctx(log.path().display().to_string()))?;
            marker.cells_total += instances.len();
            marker.cells_done += out.done.len();
            marker.failed.extend(out.failed.iter().map(|(id, e)| format!("{}/{id}: {e}", p.alias)));
            integrity.extend(out.integrity);
            all.insert(p.alias.clone(), out.done);
        }
        marker.failed.sort();
        marker.complete = marker.cells_done == marker.cells_total;
        manifest.stages.insert(Stage::Paraphrase, marker);
        if !integrity.is_empty() {
            self.save(manifest)?;
            return Err(RunError::Integrity(integrity.join("; ")));
        }
        Ok(all)
    }

    fn read(
        &self,
        ctx: &StageContext<'_>,
        clients: &BTreeMap<String, Client>,
        instances: &[QAInstance],
        paraphrases: &BTreeMap<String, BTreeMap<String, String>>,
        manifest: &mut RunManifest,
    ) -> Result<Vec<Prediction>, RunError> {
        let mut predictions = Vec::new();
        let mut marker = StageMarker::default();
        let mut integrity = Vec::new();
        let conditions = manifest.snapshot.conditions();
        for r in &self.settings.readers {
            for c in &conditions {
                let log = JsonlLog::new(self.path(&format!("progress/read/{}/{}.jsonl", r.alias, condition_slug(c))));
                let source = match c {
                    Condition::Gold => None,
                    Condition::Paraphrased(a) => paraphrases.get(a),
                };
                let out = run_read(ctx, self.client(clients, r), r, c, instances, source, &log)
                    .map_err(io_ctx(log.path().display().to_string()))?;
                marker.cells_total += instances.len();
                marker.cells_done += out.done.len();
                marker.failed.extend(out.failed.iter().map(|(id, e)| format!("{}/{c}/{id}: {e}", r.alias)));
                integrity.extend(out.integrity);
                predictions.extend(out.done.into_values());
            }
        }
        marker.failed.sort();
        marker.complete = marker.cells_done == marker.cells_total;
        manifest.stages.insert(Stage::Read, marker);
        if !integrity.is_empty() {
            self.save(manifest)?;
            return Err(RunError::Integrity(integrity.join("; ")));
        }
        sort_predictions(&mut predictions, &self.settings.readers, &conditions, instances);
        Ok(predictions)
    }

    fn eval(
        &self,
        instances: &[QAInstance],
        predictions: &[Prediction],
        manifest: &mut RunManifest,
    ) -> Result<(), RunError> {
        let mut lines = String::new();
        for p in predictions {
            lines.push_str(&serde_json::to_string(p).expect("prediction serializes"));
            lines.push('\n');
        }
        self.write("predictions.jsonl", lines.as_bytes())?;
        let scores = score_run(self.settings.benchmark, instances, predictions)
            .map_err(|e| RunError::Integrity(e.to_string()))?;
        self.write("scores.csv", scores_csv(self.settings.benchmark, &scores).as_bytes())?;
        let read_done = manifest.is_complete(Stage::Read);
        manifest.stages.insert(
            Stage::Eval,
            StageMarker {
                complete: read_done,
                cells_total: predictions.len(),
                cells_done: predictions.len(),
                failed: if read_done { vec![] } else { vec!["scored a partial read stage".into()] },
            },
        );
        manifest.artifacts.insert("predictions".into(), "predictions.jsonl".into());
        manifest.artifacts.insert("scores".into(), "scores.csv".into());
        Ok(())
    }

    fn report(
        &self,
        instances: &[QAInstance],
        paraphrases: &BTreeMap<String, BTreeMap<String, String>>,
        predictions: &[Prediction],
        manifest: &mut RunManifest,
    ) -> Result<(), RunError> {
        let readers: Vec<String> = self.settings.readers.iter().map(|r| r.alias.clone()).collect();
        let paraphrasers: Vec<String> = self.settings.paraphrasers.iter().map(|p| p.alias.clone()).collect();
        let files = emit_report(&ReportInput {
            benchmark: self.settings.benchmark,
            readers: &readers,
            paraphrasers: &paraphrasers,
            instances,
            paraphrases,
            predictions,
        })
        .map_err(|e| RunError::Integrity(e.to_string()))?;
        for (name, rel, body) in [
            ("results", "report/results.csv", &files.results_csv),
            ("table", "report/table.md", &files.table_md),
            ("accordance", "report/accordance.csv", &files.accordance_csv),
            ("flips", "report/flips.jsonl", &files.flips_jsonl),
        ] {
            self.write(rel, body.as_bytes())?;
            manifest.artifacts.insert(name.into(), rel.into());
        }
        for w in &files.warnings {
            log::warn!("report: {w}");
        }
        let eval_done = manifest.is_complete(Stage::Eval);
        manifest.stages.insert(
            Stage::Report,
            StageMarker {
                complete: eval_done,
                cells_total: 1,
                cells_done: 1,
                failed: if eval_done { vec![] } else { vec!["reported a partial run".into()] },
            },
        );
        Ok(())
    }
}

/// Orders predictions by reader, then condition, then instance, following
/// the configured and file orders.
pub fn sort_predictions(
    predictions: &mut [Prediction],
    readers: &[ModelRef],
    conditions: &[Condition],
    instances: &[QAInstance],
) {
    let reader_pos: HashMap<&str, usize> = readers.iter().enumerate().map(|(i, r)| (r.alias.as_str(), i)).collect();
    let cond_pos: HashMap<&Condition, usize> = conditions.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let inst_pos: HashMap<&str, usize> = instances.iter().enumerate().map(|(i, x)| (x.id.as_str(), i)).collect();
    predictions.sort_by_key(|p| {
        (
            reader_pos.get(p.reader.as_str()).copied().unwrap_or(usize::MAX),
            cond_pos.get(&p.condition).copied().unwrap_or(usize::MAX),
            inst_pos.get(p.instance_id.as_str()).copied().unwrap_or(usize::MAX),
            p.instance_id.clone(),
        )
    });
}

/// Usage totals recorded in a run directory.
pub fn run_usage(run_dir: &Path) -> Result<UsageReport, RunError> {
    let log = JsonlLog::new(run_dir.join("calls.jsonl"));
    let entries: Vec<CallLogEntry> = log.read().map_err(io_ctx("calls.jsonl"))?;
    Ok(usage_report(&entries))
}
