//! The run configuration file and its validation.
//!
//! ```toml
//! benchmark = "hotpotqa"
//! paraphrasers = ["gpt", "claude"]
//! readers = ["gpt", "claude"]
//! limit = 1531
//!
//! [data]
//! path = "data/hotpot_dev_distractor_v1.json"
//!
//! [models.gpt]
//! provider = "openai"
//! model_id = "gpt-3.5-turbo"
//!
//! [providers.openai]
//! kind = "openai"
//! requests_per_minute = 60
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use kce_core::datasets::Benchmark;
use kce_core::prompts::{default_demos, parse_demos, Demonstration, TemplateSet};
use serde::{Deserialize, Serialize};

use crate::providers::{SynthRule, ANTHROPIC_ENDPOINT, OPENAI_ENDPOINT};

pub const DEFAULT_PARALLELISM: i64 = 4;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub benchmark: String,
    pub data: DataPaths,
    #[serde(default)]
    pub run_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub limit: Option<i64>,
    #[serde(default)]
    pub seed: u64,
    /// Seeded shuffle before the limit is applied; off by default.
    #[serde(default)]
    pub shuffle: bool,
    #[serde(default = "default_parallelism")]
    pub parallelism: i64,
    #[serde(default)]
    pub offline: bool,
    #[serde(default)]
    pub paraphrasers: Vec<String>,
    pub readers: Vec<String>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub demos: Option<PathBuf>,
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderConfig>,
}

fn default_parallelism() -> i64 {
    DEFAULT_PARALLELISM
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub path: PathBuf,
    /// StrategyQA paragraph corpus.
    #[serde(default)]
    pub paragraphs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub provider: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// `openai`, `anthropic` or `mock`.
    pub kind: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub requests_per_minute: Option<f64>,
    #[serde(default)]
    pub burst: Option<u32>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    /// Mock only: replay transcript.
    #[serde(default)]
    pub transcript: Option<PathBuf>,
    /// Mock only: fallback synthesizer.
    #[serde(default)]
    pub synth: Option<SynthRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    OpenAi,
    Anthropic,
    Mock,
}

/// A model as the pipeline refers to it: the alias names conditions and
/// prediction rows.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelRef {
    pub alias: String,
    pub provider: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub api_key_env: String,
    pub requests_per_minute: Option<f64>,
    pub burst: u32,
    pub timeout: Duration,
    pub transcript: Option<PathBuf>,
    pub synth: Option<SynthRule>,
}

/// A configuration that passed validation, with every field typed.
#[derive(Debug, Clone)]
pub struct Settings {
    pub benchmark: Benchmark,
    pub data: PathBuf,
    pub paragraphs: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub limit: Option<usize>,
    pub seed: u64,
    pub shuffle: bool,
    pub parallelism: usize,
    pub offline: bool,
    pub paraphrasers: Vec<ModelRef>,
    pub readers: Vec<ModelRef>,
    pub providers: BTreeMap<String, ProviderSettings>,
    pub templates: TemplateSet,
    pub demos: Vec<Demonstration>,
}

/// Every problem found in one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration problem(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub limit: Option<i64>,
    pub run_dir: Option<PathBuf>,
    pub offline: bool,
    /// Route every model to this provider.
    pub provider: Option<String>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(text).map_err(|e| ConfigErrors(vec![e.to_string()]))
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.path);
        for p in [
            self.data.paragraphs.as_mut(),
            self.run_dir.as_mut(),
            self.cache_dir.as_mut(),
            self.templates.as_mut(),
            self.demos.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for p in self.providers.values_mut().filter_map(|p| p.transcript.as_mut()) {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(l) = o.limit {
            self.limit = Some(l);
        }
        if let Some(d) = &o.run_dir {
            self.run_dir = Some(d.clone());
        }
        if o.offline {
            self.offline = true;
        }
        if let Some(p) = &o.provider {
            for m in self.models.values_mut() {
                m.provider = p.clone();
            }
        }
    }

    pub fn validate(&self) -> Result<Settings, ConfigErrors> {
        let mut errors = Vec::new();

        let benchmark = match self.benchmark.parse::<Benchmark>() {
            Ok(b) => Some(b),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        };
        if !self.data.path.is_file() {
            errors.push(format!("data.path {} does not exist", self.data.path.display()));
        }
        match (&benchmark, &self.data.paragraphs) {
            (Some(Benchmark::StrategyQa), None) => {
                errors.push("data.paragraphs is required for strategyqa".to_string())
            }
            (_, Some(p)) if !p.is_file() => {
                errors.push(format!("data.paragraphs {} does not exist", p.display()))
            }
            _ => {}
        }
        let limit = match self.limit {
            Some(l) if l < 0 => {
                errors.push(format!("limit must be >= 0, got {l}"));
                None
            }
            l => l.map(|l| l as usize),
        };
        if self.parallelism < 1 {
            errors.push(format!("parallelism must be >= 1, got {}", self.parallelism));
        }

        let mut providers = BTreeMap::new();
        for (name, p) in &self.providers {
            let kind = match p.kind.as_str() {
                "openai" => ProviderKind::OpenAi,
                "anthropic" => ProviderKind::Anthropic,
                "mock" => ProviderKind::Mock,
                other => {
                    errors.push(format!(
                        "provider `{name}`: unknown kind `{other}`; expected openai, anthropic or mock"
                    ));
                    continue;
                }
            };
            if let Some(r) = p.requests_per_minute {
                if !(r.is_finite() && r > 0.0) {
                    errors.push(format!("provider `{name}`: requests_per_minute must be positive"));
                }
            }
            if p.burst == Some(0) {
                errors.push(format!("provider `{name}`: burst must be positive"));
            }
            if let Some(t) = &p.transcript {
                if !t.is_file() {
                    errors.push(format!("provider `{name}`: transcript {} does not exist", t.display()));
                }
            }
            if kind == ProviderKind::Mock && p.transcript.is_none() && p.synth.is_none() {
                errors.push(format!("provider `{name}`: a mock needs a transcript or a synth rule"));
            }
            if kind != ProviderKind::Mock && (p.transcript.is_some() || p.synth.is_some()) {
                errors.push(format!("provider `{name}`: transcript and synth apply to mock providers only"));
            }
            let (endpoint, key) = match kind {
                ProviderKind::OpenAi => (OPENAI_ENDPOINT, "OPENAI_API_KEY"),
                ProviderKind::Anthropic => (ANTHROPIC_ENDPOINT, "ANTHROPIC_API_KEY"),
                ProviderKind::Mock => ("", ""),
            };
            providers.insert(
                name.clone(),
                ProviderSettings {
                    kind,
                    endpoint: p.endpoint.clone().unwrap_or_else(|| endpoint.to_string()),
                    api_key_env: p.api_key_env.clone().unwrap_or_else(|| key.to_string()),
                    requests_per_minute: p.requests_per_minute,
                    burst: p.burst.unwrap_or(1).max(1),
                    timeout: Duration::from_secs(p.timeout_secs.unwrap_or(60)),
                    transcript: p.transcript.clone(),
                    synth: p.synth.clone(),
                },
            );
        }

        for (alias, m) in &self.models {
            if !valid_alias(alias) {
                errors.push(format!(
                    "model alias `{alias}` must be non-empty and use only letters, digits, `-`, `_` or `.`"
                ));
            }
            if m.model_id.trim().is_empty() {
                errors.push(format!("model `{alias}`: model_id is empty"));
            }
            if !self.providers.contains_key(&m.provider) {
                errors.push(format!("model `{alias}`: provider `{}` is not defined", m.provider));
            }
        }

        let mut resolve = |role: &str, list: &[String]| -> Vec<ModelRef> {
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for alias in list {
                if !seen.insert(alias) {
                    errors.push(format!("{role} `{alias}` is listed twice"));
                    continue;
                }
                match self.models.get(alias) {
                    Some(m) => out.push(ModelRef {
                        alias: alias.clone(),
                        provider: m.provider.clone(),
                        model_id: m.model_id.clone(),
                    }),
                    None => errors.push(format!("{role} `{alias}` is not defined under [models]")),
                }
            }
            out
        };
        let paraphrasers = resolve("paraphraser", &self.paraphrasers);
        let readers = resolve("reader", &self.readers);
        if self.readers.is_empty() {
            errors.push("at least one reader is required".to_string());
        }

        let templates = match &self.templates {
            None => Some(TemplateSet::default()),
            Some(p) => match std::fs::read_to_string(p) {
                Ok(t) => TemplateSet::from_toml(&t)
                    .map_err(|e| errors.push(format!("templates {}: {e}", p.display())))
                    .ok(),
                Err(e) => {
                    errors.push(format!("templates {}: {e}", p.display()));
                    None
                }
            },
        };
        let demos = match &self.demos {
            None => Some(default_demos()),
            Some(p) => match std::fs::read_to_string(p) {
                Ok(t) => parse_demos(&t).map_err(|e| errors.push(format!("demos {}: {e}", p.display()))).ok(),
                Err(e) => {
                    errors.push(format!("demos {}: {e}", p.display()));
                    None
                }
            },
        };

        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        Ok(Settings {
            benchmark: benchmark.expect("checked"),
            data: self.data.path.clone(),
            paragraphs: self.data.paragraphs.clone(),
            run_dir: self.run_dir.clone(),
            cache_dir: self.cache_dir.clone(),
            limit,
            seed: self.seed,
            shuffle: self.shuffle,
            parallelism: self.parallelism as usize,
            offline: self.offline,
            paraphrasers,
            readers,
            providers,
            templates: templates.expect("checked"),
            demos: demos.expect("checked"),
        })
    }
}

fn valid_alias(alias: &str) -> bool {
    !alias.is_empty() && alias.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
