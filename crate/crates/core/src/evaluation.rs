//! Answer extraction and scoring.
//!
//! NQ and HotPotQA use exact match after normalization (lowercase, drop
//! punctuation, drop the articles "a"/"an"/"the", collapse whitespace).
//! StrategyQA takes the first "yes"/"no" word, QASC the first uppercase
//! letter from A to H.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{Benchmark, QAInstance};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction references unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("{scorer} scorer applied to {instance} instance `{id}`")]
    BenchmarkMismatch { scorer: Benchmark, instance: Benchmark, id: String },
    #[error("bad condition `{0}` (expected `gold` or `paraph:<name>`)")]
    BadCondition(String),
}

/// Anything that is neither alphanumeric nor whitespace. For ASCII this is
/// exactly the printable punctuation set.
pub fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let kept: String = lowered.chars().filter(|&c| !is_punctuation(c)).collect();
    kept.split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Full-string equality after normalization against any accepted answer.
pub fn score_em<S: AsRef<str>>(raw_output: &str, accepted_answers: &[S]) -> bool {
    let got = normalize_answer(raw_output);
    accepted_answers.iter().any(|a| normalize_answer(a.as_ref()) == got)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn as_str(self) -> &'static str {
        match self {
            YesNo::Yes => "yes",
            YesNo::No => "no",
        }
    }
}

/// First "yes" or "no" word, case-insensitive, with punctuation treated as
/// a word separator.
pub fn extract_yes_no(raw_output: &str) -> Option<YesNo> {
    let spaced: String = raw_output
        .to_lowercase()
        .chars()
        .map(|c| if is_punctuation(c) { ' ' } else { c })
        .collect();
    spaced.split_whitespace().find_map(|w| match w {
        "yes" => Some(YesNo::Yes),
        "no" => Some(YesNo::No),
        _ => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChoiceExtraction {
    pub label: char,
    /// The letter sits inside a longer word, as in "Climate".
    pub embedded: bool,
}

/// First uppercase `A`..=`H` character anywhere in the text.
pub fn extract_choice(raw_output: &str) -> Option<ChoiceExtraction> {
    let chars: Vec<char> = raw_output.chars().collect();
    chars.iter().enumerate().find_map(|(i, &c)| {
        if !('A'..='H').contains(&c) {
            return None;
        }
        let before = i > 0 && chars[i - 1].is_alphanumeric();
        let after = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        Some(ChoiceExtraction { label: c, embedded: before || after })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ExactMatch,
    Accuracy,
}

impl MetricKind {
    pub fn for_benchmark(b: Benchmark) -> Self {
        match b {
            Benchmark::Nq | Benchmark::HotpotQa => MetricKind::ExactMatch,
            Benchmark::StrategyQa | Benchmark::Qasc => MetricKind::Accuracy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::ExactMatch => "exact_match",
            MetricKind::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    pub numerator: u64,
    pub denominator: u64,
}

impl Metric {
    /// Fraction correct; `None` when nothing was scored.
    pub fn value(&self) -> Option<f64> {
        (self.denominator > 0).then(|| self.numerator as f64 / self.denominator as f64)
    }

    pub fn percent(&self) -> Option<f64> {
        self.value().map(|v| v * 100.0)
    }
}

/// Which context a reader saw.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Condition {
    Gold,
    /// Paraphrased by the named paraphraser.
    Paraphrased(String),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Gold => f.write_str("gold"),
            Condition::Paraphrased(p) => write!(f, "paraph:{p}"),
        }
    }
}

impl FromStr for Condition {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gold" => Ok(Condition::Gold),
            _ => match s.strip_prefix("paraph:") {
                Some(name) if !name.is_empty() => Ok(Condition::Paraphrased(name.to_string())),
                _ => Err(EvalError::BadCondition(s.to_string())),
            },
        }
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> Self {
        c.to_string()
    }
}

impl TryFrom<String> for Condition {
    type Error = EvalError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// One reader output under one condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub condition: Condition,
    pub reader: String,
    pub raw_output: String,
    pub extracted: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Outcome of scoring one raw output against one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgement {
    pub extracted: Option<String>,
    pub correct: bool,
    pub note: Option<String>,
}

/// Scores `raw_output` for `instance` with the scorer of `scorer`.
pub fn judge(scorer: Benchmark, instance: &QAInstance, raw_output: &str) -> Result<Judgement, EvalError> {
    if instance.benchmark != scorer {
        return Err(EvalError::BenchmarkMismatch {
            scorer,
            instance: instance.benchmark,
            id: instance.id.clone(),
        });
    }
    Ok(match scorer {
        Benchmark::Nq | Benchmark::HotpotQa => {
            let normalized = normalize_answer(raw_output);
            let correct = score_em(raw_output, &instance.accepted_answers);
            let note = if normalized.is_empty() {
                Some("empty after normalization".to_string())
            } else if !correct {
                Some("no accepted answer matched".to_string())
            } else {
                None
            };
            Judgement { extracted: Some(normalized), correct, note }
        }
        Benchmark::StrategyQa => match extract_yes_no(raw_output) {
            Some(yn) => {
                let correct = instance.accepted_answers.iter().any(|a| a == yn.as_str());
                Judgement { extracted: Some(yn.as_str().to_string()), correct, note: None }
            }
            None => Judgement {
                extracted: None,
                correct: false,
                note: Some("no yes/no word found".to_string()),
            },
        },
        Benchmark::Qasc => match extract_choice(raw_output) {
            Some(choice) => {
                let label = choice.label.to_string();
                let correct = instance.accepted_answers.contains(&label);
                let note = choice
                    .embedded
                    .then(|| format!("letter {label} taken from inside a word"));
                Judgement { extracted: Some(label), correct, note }
            }
            None => Judgement {
                extracted: None,
                correct: false,
                note: Some("no letter A-H found".to_string()),
            },
        },
    })
}

/// Re-scores every prediction from its raw output and aggregates per
/// (reader, condition). Prediction order does not matter.
pub fn score_run(
    scorer: Benchmark,
    instances: &[QAInstance],
    predictions: &[Prediction],
) -> Result<BTreeMap<(String, Condition), Metric>, EvalError> {
    let by_id: HashMap<&str, &QAInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let kind = MetricKind::for_benchmark(scorer);
    let mut cells: BTreeMap<(String, Condition), Metric> = BTreeMap::new();
    for p in predictions {
        let instance = by_id
            .get(p.instance_id.as_str())
            .ok_or_else(|| EvalError::UnknownInstance(p.instance_id.clone()))?;
        let verdict = judge(scorer, instance, &p.raw_output)?;
        let cell = cells
            .entry((p.reader.clone(), p.condition.clone()))
            .or_insert(Metric { kind, numerator: 0, denominator: 0 });
        cell.denominator += 1;
        if verdict.correct {
            cell.numerator += 1;
        }
    }
    Ok(cells)
}

pub const SCORES_CSV_HEADER: [&str; 7] = [
    "benchmark",
    "reader",
    "condition",
    "metric_kind",
    "numerator",
    "denominator",
    "value_percent",
];

pub(crate) fn format_percent(p: Option<f64>) -> String {
    match p {
        Some(v) => format!("{v:.4}"),
        None => "MISSING".to_string(),
    }
}

pub fn scores_csv(benchmark: Benchmark, scores: &BTreeMap<(String, Condition), Metric>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORES_CSV_HEADER).expect("in-memory write");
    for ((reader, condition), m) in scores {
        w.write_record([
            benchmark.as_str().to_string(),
            reader.clone(),
            condition.to_string(),
            m.kind.as_str().to_string(),
            m.numerator.to_string(),
            m.denominator.to_string(),
            format_percent(m.percent()),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}
