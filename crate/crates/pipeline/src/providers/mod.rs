//! Text generation clients.
//!
//! A [`Client`] wraps one [`Transport`] with the response cache, the retry
//! policy and a shared rate limiter. Every completed request is written to
//! the cache before it is returned, so a rerun against a warm cache issues no
//! calls at all.

mod cache;
mod http;
mod mock;
mod rate;
mod retry;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use kce_core::datasets::Benchmark;
use kce_core::prompts::Mode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheError, CacheRecord, ResponseCache};
pub use http::{AnthropicTransport, OpenAiTransport, ANTHROPIC_ENDPOINT, OPENAI_ENDPOINT};
pub use mock::{read_transcript, FaultKind, MockTransport, SynthRule, TranscriptEntry};
pub use rate::RateLimiter;
pub use retry::{AttemptRecord, RetryPolicy, Sleeper, ThreadSleeper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub max_tokens: u32,
    /// `None` leaves the provider default in place.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl GenerationParams {
    pub fn for_model(mut self, model_id: &str) -> Self {
        self.model_id = model_id.to_string();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model_id.trim().is_empty() {
            return Err("model id is empty".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        if let Some(t) = self.temperature {
            if !t.is_finite() || !(0.0..=2.0).contains(&t) {
                return Err(format!("temperature {t} outside [0, 2]"));
            }
        }
        Ok(())
    }
}

/// Generation budget per benchmark and prompt kind. The model id is left
/// empty; fill it with [`GenerationParams::for_model`].
pub fn params_for(benchmark: Benchmark, mode: Mode) -> GenerationParams {
    let (max_tokens, temperature) = match (benchmark, mode) {
        (Benchmark::Nq, Mode::Paraphrase) => (500, None),
        (Benchmark::Nq, Mode::Read) => (25, None),
        (Benchmark::HotpotQa | Benchmark::StrategyQa, Mode::Paraphrase) => (300, None),
        (Benchmark::HotpotQa | Benchmark::StrategyQa, Mode::Read) => (10, None),
        (Benchmark::Qasc, Mode::Paraphrase) => (100, Some(0.8)),
        (Benchmark::Qasc, Mode::Read) => (10, Some(0.4)),
    };
    GenerationParams { model_id: String::new(), max_tokens, temperature }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub provider: String,
    pub prompt: String,
    pub params: GenerationParams,
}

impl ProviderRequest {
    pub fn key(&self) -> CacheKey {
        CacheKey::of(self)
    }
}

/// Hex SHA-256 over the length-prefixed request fields.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn of(request: &ProviderRequest) -> Self {
        let mut h = Sha256::new();
        let temperature = match request.params.temperature {
            Some(t) => format!("{:016x}", t.to_bits()),
            None => "default".to_string(),
        };
        for field in [
            request.provider.as_str(),
            request.params.model_id.as_str(),
            request.prompt.as_str(),
            &request.params.max_tokens.to_string(),
            &temperature,
        ] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field.as_bytes());
        }
        CacheKey(hex::encode(h.finalize()))
    }

    /// Accepts 64 lowercase hex digits.
    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
            .then(|| CacheKey(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// What a transport hands back for one successful call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub key: CacheKey,
    pub provider: String,
    pub model_id: String,
    /// Exactly what the provider returned; never trimmed.
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
    /// Seconds since the Unix epoch when the call completed.
    pub timestamp: u64,
    pub cache_hit: bool,
    pub attempts: u32,
}

impl ProviderResponse {
    fn from_record(record: CacheRecord, cache_hit: bool) -> Self {
        ProviderResponse {
            key: record.key,
            provider: record.request.provider,
            model_id: record.request.params.model_id,
            text: record.text,
            usage: record.usage,
            latency_ms: record.latency_ms,
            timestamp: record.timestamp,
            cache_hit,
            attempts: record.attempts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportErrorKind {
    /// Network failure, 429 or 5xx; worth retrying.
    Transient,
    /// Bad or missing credentials.
    Auth,
    /// Any other rejection.
    Fatal,
    /// The mock has nothing recorded for this request.
    ReplayMiss,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct TransportError {
    pub kind: TransportErrorKind,
    pub message: String,
}

impl TransportError {
    pub fn new(kind: TransportErrorKind, message: impl Into<String>) -> Self {
        TransportError { kind, message: message.into() }
    }
}

/// One way of turning a request into text.
pub trait Transport: Send + Sync {
    fn call(&self, request: &ProviderRequest) -> Result<Completion, TransportError>;

    /// True when calls leave the machine; such transports are refused in
    /// offline mode.
    fn is_live(&self) -> bool;
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid generation parameters: {0}")]
    Params(String),
    #[error("retries exhausted for {key} after {} attempts: {}", .attempts.len(), last_error(.attempts))]
    Exhausted { key: CacheKey, attempts: Vec<AttemptRecord> },
    #[error("authentication failed for provider `{provider}`: {message}")]
    Auth { provider: String, message: String },
    #[error("provider `{provider}` rejected the request: {message}")]
    Rejected { provider: String, message: String },
    #[error("no recorded response for key {0}")]
    ReplayMiss(CacheKey),
    #[error("offline: provider `{provider}` would need a live call for key {key}")]
    Offline { provider: String, key: CacheKey },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

fn last_error(attempts: &[AttemptRecord]) -> &str {
    attempts.last().map(|a| a.error.as_str()).unwrap_or("")
}

impl ProviderError {
    pub fn is_integrity(&self) -> bool {
        matches!(self, ProviderError::Cache(CacheError::Conflict { .. } | CacheError::Corrupt { .. }))
    }
}

/// Cached, retrying, rate-limited access to one provider.
pub struct Client {
    name: String,
    transport: Arc<dyn Transport>,
    cache: ResponseCache,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    sleeper: Arc<dyn Sleeper>,
    offline: bool,
    key_locks: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
    calls: AtomicU64,
}

impl Client {
    pub fn new(name: &str, transport: Arc<dyn Transport>, cache: ResponseCache) -> Self {
        Client {
            name: name.to_string(),
            transport,
            cache,
            retry: RetryPolicy::default(),
            limiter: None,
            sleeper: Arc::new(ThreadSleeper),
            offline: false,
            key_locks: Mutex::new(HashMap::new()),
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Transport invocations so far, counting each retry attempt.
    pub fn transport_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// The prompt for `params` against this provider, served from cache when
    /// possible. Concurrent requests for one key wait for each other so the
    /// provider is called at most once per key.
    pub fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<ProviderResponse, ProviderError> {
        params.validate().map_err(ProviderError::Params)?;
        let request = ProviderRequest {
            provider: self.name.clone(),
            prompt: prompt.to_string(),
            params: params.clone(),
        };
        let key = request.key();
        let lock = self
            .key_locks
            .lock()
            .expect("key lock table poisoned")
            .entry(key.clone())
            .or_default()
            .clone();
        let _guard = lock.lock().expect("key lock poisoned");

        if let Some(record) = self.cache.get(&key)? {
            return Ok(ProviderResponse::from_record(record, true));
        }
        if self.offline && self.transport.is_live() {
            return Err(ProviderError::Offline { provider: self.name.clone(), key });
        }

        let started = Instant::now();
        let mut attempts = Vec::new();
        let completion = loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire(self.sleeper.as_ref());
            }
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.transport.call(&request) {
                Ok(c) => break c,
                Err(e) => match e.kind {
                    TransportErrorKind::Auth => {
                        return Err(ProviderError::Auth { provider: self.name.clone(), message: e.message })
                    }
                    TransportErrorKind::Fatal => {
                        return Err(ProviderError::Rejected { provider: self.name.clone(), message: e.message })
                    }
                    TransportErrorKind::ReplayMiss => return Err(ProviderError::ReplayMiss(key)),
                    TransportErrorKind::Transient => {
                        let attempt = attempts.len() as u32 + 1;
                        let delay = if attempt < self.retry.max_attempts {
                            self.retry.delay(attempt)
                        } else {
                            Duration::ZERO
                        };
                        attempts.push(AttemptRecord {
                            attempt,
                            error: e.message,
                            delay_ms: delay.as_millis() as u64,
                        });
                        if attempt >= self.retry.max_attempts {
                            return Err(ProviderError::Exhausted { key, attempts });
                        }
                        log::warn!("{}: attempt {attempt} failed, retrying in {delay:?}", self.name);
                        self.sleeper.sleep(delay);
                    }
                },
            }
        };
        let record = CacheRecord {
            key: key.clone(),
            request,
            text: completion.text,
            usage: completion.usage,
            latency_ms: started.elapsed().as_millis() as u64,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            attempts: attempts.len() as u32 + 1,
            attempt_log: attempts,
        };
        self.cache.put(&record)?;
        Ok(ProviderResponse::from_record(record, false))
    }
}

/// One logged response, tagged with the pipeline stage that asked for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLogEntry {
    pub stage: String,
    pub provider: String,
    pub model_id: String,
    pub key: CacheKey,
    pub cache_hit: bool,
    pub usage: Usage,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UsageTotals {
    /// Responses that needed a provider call.
    pub calls: u64,
    pub cache_hits: u64,
    /// Token counts summed over the calls only; cache hits cost nothing.
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub type UsageReport = BTreeMap<(String, String, String), UsageTotals>;

/// Totals grouped by (provider, model, stage).
pub fn usage_report(entries: &[CallLogEntry]) -> UsageReport {
    let mut report = UsageReport::new();
    for e in entries {
        let t = report
            .entry((e.provider.clone(), e.model_id.clone(), e.stage.clone()))
            .or_default();
        if e.cache_hit {
            t.cache_hits += 1;
        } else {
            t.calls += 1;
            t.prompt_tokens += e.usage.prompt_tokens;
            t.completion_tokens += e.usage.completion_tokens;
        }
    }
    report
}

/// Plain-text rendering of a usage report, one line per group.
pub fn format_usage(report: &UsageReport) -> String {
    let mut out = String::from("provider\tmodel\tstage\tcalls\tcache_hits\tprompt_tokens\tcompletion_tokens\n");
    for ((provider, model, stage), t) in report {
        out.push_str(&format!(
            "{provider}\t{model}\t{stage}\t{}\t{}\t{}\t{}\n",
            t.calls, t.cache_hits, t.prompt_tokens, t.completion_tokens
        ));
    }
    out
}
