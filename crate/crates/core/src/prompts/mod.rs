//! Paraphrase and read prompts.
//!
//! Templates are data: [`TemplateSet::default`] parses the bundled
//! `templates.toml`, and a replacement file with the same layout can be
//! loaded instead. Paragraph breaks are two newlines; lines inside one
//! demonstration are separated by a single newline.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datasets::{Benchmark, Choice};

const DEFAULT_TEMPLATES: &str = include_str!("templates.toml");
const DEFAULT_DEMOS: &str = include_str!("nq_demos.json");

/// Demonstrations required by the NQ read prompt.
pub const NQ_DEMO_COUNT: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template file: {0}")]
    Parse(String),
    #[error("no {mode} template for {benchmark}")]
    MissingTemplate { benchmark: Benchmark, mode: Mode },
    #[error("template uses unknown slot `{{{0}}}`")]
    UnknownSlot(String),
    #[error("unterminated slot in template")]
    Unterminated,
    #[error("context is empty")]
    EmptyContext,
    #[error("NQ read needs exactly {NQ_DEMO_COUNT} demonstrations, got {0}")]
    DemoCount(usize),
    #[error("{0} reads are zero-shot; demonstrations are not accepted")]
    UnexpectedDemos(Benchmark),
    #[error("QASC read needs the answer choices")]
    MissingChoices,
    #[error("demonstration file: {0}")]
    Demos(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Paraphrase,
    Read,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Paraphrase => "paraphrase",
            Mode::Read => "read",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkTemplates {
    pub paraphrase: String,
    pub read: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<Benchmark, BenchmarkTemplates>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

impl TemplateSet {
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let raw: BTreeMap<String, BenchmarkTemplates> =
            toml::from_str(text).map_err(|e| PromptError::Parse(e.to_string()))?;
        let mut templates = BTreeMap::new();
        for (name, t) in raw {
            let b: Benchmark = name.parse().map_err(|e: crate::datasets::DatasetError| {
                PromptError::Parse(e.to_string())
            })?;
            templates.insert(b, t);
        }
        for b in Benchmark::ALL {
            let t = templates
                .get(&b)
                .ok_or(PromptError::MissingTemplate { benchmark: b, mode: Mode::Paraphrase })?;
            check_slots(&t.paraphrase, &["q", "c"])?;
            let read_slots: &[&str] = if b == Benchmark::Nq { &["q", "c", "demos"] } else { &["q", "c"] };
            check_slots(&t.read, read_slots)?;
            if let Some(d) = &t.demo {
                check_slots(d, &["q", "c", "a"])?;
            }
        }
        if templates[&Benchmark::Nq].demo.is_none() {
            return Err(PromptError::Parse("nq needs a `demo` template".into()));
        }
        Ok(Self { templates })
    }

    pub fn get(&self, benchmark: Benchmark, mode: Mode) -> &str {
        let t = &self.templates[&benchmark];
        match mode {
            Mode::Paraphrase => &t.paraphrase,
            Mode::Read => &t.read,
        }
    }

    /// SHA-256 over every template in benchmark order, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (b, t) in &self.templates {
            for (name, text) in [
                ("paraphrase", Some(&t.paraphrase)),
                ("read", Some(&t.read)),
                ("demo", t.demo.as_ref()),
            ] {
                if let Some(text) = text {
                    h.update(format!("{}/{name}\n", b.as_str()).as_bytes());
                    h.update(text.as_bytes());
                    h.update([0u8]);
                }
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub passage: String,
    pub question: String,
    pub answer: String,
    pub source_note: String,
}

/// The three bundled NQ demonstrations.
pub fn default_demos() -> Vec<Demonstration> {
    parse_demos(DEFAULT_DEMOS).expect("bundled demonstrations parse")
}

pub fn parse_demos(text: &str) -> Result<Vec<Demonstration>, PromptError> {
    let demos: Vec<Demonstration> =
        serde_json::from_str(text).map_err(|e| PromptError::Demos(e.to_string()))?;
    if demos.len() != NQ_DEMO_COUNT {
        return Err(PromptError::DemoCount(demos.len()));
    }
    Ok(demos)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub benchmark: Benchmark,
    pub mode: Mode,
    pub template_text: String,
    pub rendered: String,
    pub warnings: Vec<String>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(template: &str) -> Result<Vec<Piece<'_>>, PromptError> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push(Piece::Text(&rest[..open]));
        let close = rest[open..].find('}').ok_or(PromptError::Unterminated)? + open;
        out.push(Piece::Slot(&rest[open + 1..close]));
        rest = &rest[close + 1..];
    }
    out.push(Piece::Text(rest));
    Ok(out)
}

fn check_slots(template: &str, allowed: &[&str]) -> Result<(), PromptError> {
    for p in pieces(template)? {
        if let Piece::Slot(name) = p {
            if !allowed.contains(&name) {
                return Err(PromptError::UnknownSlot(name.to_string()));
            }
        }
    }
    Ok(())
}

/// Single-pass substitution; braces inside slot values are left alone.
fn fill(template: &str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + slots.iter().map(|s| s.1.len()).sum::<usize>());
    for p in pieces(template)? {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => {
                let value = slots
                    .iter()
                    .find(|(k, _)| *k == name)
                    .ok_or_else(|| PromptError::UnknownSlot(name.to_string()))?;
                out.push_str(value.1);
            }
        }
    }
    Ok(out)
}

fn question_warnings(question: &str) -> Vec<String> {
    if question.trim().is_empty() {
        vec!["empty question".to_string()]
    } else {
        Vec::new()
    }
}

pub fn render_paraphrase(
    templates: &TemplateSet,
    benchmark: Benchmark,
    question: &str,
    context: &str,
) -> Result<PromptBundle, PromptError> {
    if context.trim().is_empty() {
        return Err(PromptError::EmptyContext);
    }
    let template = templates.get(benchmark, Mode::Paraphrase);
    Ok(PromptBundle {
        benchmark,
        mode: Mode::Paraphrase,
        template_text: template.to_string(),
        rendered: fill(template, &[("q", question), ("c", context)])?,
        warnings: question_warnings(question),
    })
}

/// Read prompt. NQ takes exactly three demonstrations; QASC requires the
/// choices, which are expected inline in `question` already.
pub fn render_read(
    templates: &TemplateSet,
    benchmark: Benchmark,
    question: &str,
    context: &str,
    demos: Option<&[Demonstration]>,
    choices: Option<&[Choice]>,
) -> Result<PromptBundle, PromptError> {
    if context.trim().is_empty() {
        return Err(PromptError::EmptyContext);
    }
    let template = templates.get(benchmark, Mode::Read);
    let demos = demos.unwrap_or(&[]);
    let rendered = match benchmark {
        Benchmark::Nq => {
            if demos.len() != NQ_DEMO_COUNT {
                return Err(PromptError::DemoCount(demos.len()));
            }
            let demo_template = templates.templates[&Benchmark::Nq]
                .demo
                .as_deref()
                .expect("validated at load");
            let block = demos
                .iter()
                .map(|d| fill(demo_template, &[("c", &d.passage), ("q", &d.question), ("a", &d.answer)]))
                .collect::<Result<Vec<_>, _>>()?
                .join("\n\n");
            fill(template, &[("demos", &block), ("c", context), ("q", question)])?
        }
        other => {
            if !demos.is_empty() {
                return Err(PromptError::UnexpectedDemos(other));
            }
            if other == Benchmark::Qasc && choices.is_none_or(|c| c.is_empty()) {
                return Err(PromptError::MissingChoices);
            }
            fill(template, &[("c", context), ("q", question)])?
        }
    };
    Ok(PromptBundle {
        benchmark,
        mode: Mode::Read,
        template_text: template.to_string(),
        rendered,
        warnings: question_warnings(question),
    })
}
