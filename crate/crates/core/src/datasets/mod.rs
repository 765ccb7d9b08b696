//! Benchmark ingestion into a single record shape.
//!
//! Each loader reads one benchmark's published file layout, builds the gold
//! passages for every item and reports the items it had to skip. Downstream
//! stages only ever see [`QAInstance`] values, usually through the
//! line-delimited interchange file written by [`write_instances`].

mod hotpotqa;
mod nq;
mod qasc;
mod strategyqa;

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hotpotqa::{load_hotpotqa, HOTPOTQA_PAPER_LIMIT};
pub use nq::{load_nq, select_gold_nq};
pub use qasc::load_qasc;
pub use strategyqa::load_strategyqa;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("no provenance passage contains an accepted answer")]
    NoGold,
    #[error("instance `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("unknown benchmark `{0}` (expected one of nq, hotpotqa, strategyqa, qasc)")]
    UnknownBenchmark(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Nq,
    #[serde(rename = "hotpotqa")]
    HotpotQa,
    #[serde(rename = "strategyqa")]
    StrategyQa,
    Qasc,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] =
        [Benchmark::Nq, Benchmark::HotpotQa, Benchmark::StrategyQa, Benchmark::Qasc];

    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::Nq => "nq",
            Benchmark::HotpotQa => "hotpotqa",
            Benchmark::StrategyQa => "strategyqa",
            Benchmark::Qasc => "qasc",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Benchmark::Nq => "NQ",
            Benchmark::HotpotQa => "HotPotQA",
            Benchmark::StrategyQa => "StrategyQA",
            Benchmark::Qasc => "QASC",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Benchmark {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Benchmark::ALL
            .into_iter()
            .find(|b| b.as_str() == lower)
            .ok_or_else(|| DatasetError::UnknownBenchmark(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub title: Option<String>,
    pub body: String,
}

impl Passage {
    pub fn new(title: Option<String>, body: impl Into<String>) -> Option<Self> {
        let body = body.into();
        (!body.trim().is_empty()).then_some(Passage { title, body })
    }

    /// `Title: {title}\n{body}` when titled, the bare body otherwise.
    pub fn render(&self) -> String {
        match &self.title {
            Some(t) => format!("Title: {t}\n{}", self.body),
            None => self.body.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAInstance {
    pub id: String,
    pub benchmark: Benchmark,
    pub question: String,
    /// Answer strings; QASC stores the correct choice label.
    pub accepted_answers: Vec<String>,
    pub choices: Option<Vec<Choice>>,
    pub gold_passages: Vec<Passage>,
}

pub const QASC_LABELS: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

impl QAInstance {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |reason: &str| {
            Err(DatasetError::Invalid { id: self.id.clone(), reason: reason.to_string() })
        };
        if self.accepted_answers.is_empty() {
            return bad("no accepted answers");
        }
        if self.gold_passages.is_empty() {
            return bad("no gold passages");
        }
        if self.gold_passages.iter().any(|p| p.body.trim().is_empty()) {
            return bad("empty passage body");
        }
        match self.benchmark {
            Benchmark::Nq => {
                let contains = self.gold_passages.iter().any(|p| {
                    self.accepted_answers.iter().any(|a| !a.is_empty() && p.body.contains(a.as_str()))
                });
                if !contains {
                    return bad("no gold passage contains an accepted answer");
                }
            }
            Benchmark::HotpotQa => {
                if self.gold_passages.len() != 2 {
                    return bad("HotPotQA needs exactly 2 gold passages");
                }
            }
            Benchmark::StrategyQa => {
                if self.accepted_answers.len() != 1
                    || !matches!(self.accepted_answers[0].as_str(), "yes" | "no")
                {
                    return bad("StrategyQA answer must be exactly `yes` or `no`");
                }
            }
            Benchmark::Qasc => {
                let labels: Option<Vec<&str>> = self
                    .choices
                    .as_ref()
                    .map(|cs| cs.iter().map(|c| c.label.as_str()).collect());
                if labels.as_deref() != Some(&QASC_LABELS[..]) {
                    return bad("QASC needs 8 choices labeled A..H");
                }
                if self.gold_passages.len() != 2 {
                    return bad("QASC needs exactly 2 seed facts");
                }
                if self.accepted_answers.len() != 1
                    || !QASC_LABELS.contains(&self.accepted_answers[0].as_str())
                {
                    return bad("QASC answer must be one choice label");
                }
            }
        }
        if self.benchmark != Benchmark::Qasc && self.choices.is_some() {
            return bad("only QASC carries choices");
        }
        Ok(())
    }
}

/// Gold passages rendered and joined by one blank line.
pub fn build_context(instance: &QAInstance) -> String {
    instance.gold_passages.iter().map(Passage::render).collect::<Vec<_>>().join("\n\n")
}

/// An item a loader dropped, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    /// Item id when known, else its position in the source file.
    pub item: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadStatus {
    Complete,
    /// Some items were skipped but others survived.
    WithSkips(usize),
    /// Nothing survived.
    Empty,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOutcome {
    pub instances: Vec<QAInstance>,
    pub skipped: Vec<Skipped>,
}

impl LoadOutcome {
    pub fn status(&self) -> LoadStatus {
        if self.instances.is_empty() {
            LoadStatus::Empty
        } else if self.skipped.is_empty() {
            LoadStatus::Complete
        } else {
            LoadStatus::WithSkips(self.skipped.len())
        }
    }

    pub(crate) fn skip(&mut self, item: impl Into<String>, reason: impl Into<String>) {
        self.skipped.push(Skipped { item: item.into(), reason: reason.into() });
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))
}

/// Parses either a JSON array document or one JSON value per line.
pub(crate) fn parse_records<T: serde::de::DeserializeOwned>(
    path: &Path,
    text: &str,
) -> Result<Vec<(usize, T)>, DatasetError> {
    if text.trim_start().starts_with('[') {
        let values: Vec<serde_json::Value> = serde_json::from_str(text)
            .map_err(|e| DatasetError::Format { path: path.to_path_buf(), message: e.to_string() })?;
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value(v)
                    .map(|r| (i + 1, r))
                    .map_err(|e| DatasetError::Format {
                        path: path.to_path_buf(),
                        message: format!("item {}: {e}", i + 1),
                    })
            })
            .collect()
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map(|r| (i + 1, r)).map_err(|e| DatasetError::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

/// Writes the interchange format: one JSON object per line.
pub fn write_instances<W: Write>(mut out: W, instances: &[QAInstance]) -> std::io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_instances<R: BufRead>(input: R, path: &Path) -> Result<Vec<QAInstance>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: QAInstance = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}
