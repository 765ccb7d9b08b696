//! Offline transport. Lookup order: transcript entry by cache key, scripted
//! text by exact prompt, then the synthesizer rule; otherwise a replay miss.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CacheKey, Completion, ProviderRequest, Transport, TransportError, TransportErrorKind, Usage};

/// One line of a replay transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: CacheKey,
    pub text: String,
    #[serde(default)]
    pub usage: Usage,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1)))
        .collect()
}

/// How the mock invents text for prompts it has no record of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthRule {
    /// First non-blank line of the context embedded in the prompt.
    EchoFirstLine,
    /// The same text for every prompt.
    Fixed(String),
    /// Deterministic stand-in model for the bundled templates. Paraphrase
    /// prompts get the context with a model-specific subset of words
    /// dropped. Read prompts get a yes/no, a choice letter or a capitalized
    /// span of the passage, chosen by hashing the model id and passage.
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    Transient,
    Auth,
}

struct Fault {
    needle: String,
    kind: FaultKind,
    remaining: u32,
}

#[derive(Default)]
pub struct MockTransport {
    transcript: HashMap<CacheKey, TranscriptEntry>,
    scripted: HashMap<String, String>,
    synth: Option<SynthRule>,
    faults: Mutex<Vec<Fault>>,
    delay: Duration,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl MockTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_transcript(mut self, entries: Vec<TranscriptEntry>) -> Self {
        self.transcript.extend(entries.into_iter().map(|e| (e.key.clone(), e)));
        self
    }

    pub fn with_script(mut self, prompt: &str, text: &str) -> Self {
        self.scripted.insert(prompt.to_string(), text.to_string());
        self
    }

    pub fn with_synth(mut self, rule: SynthRule) -> Self {
        self.synth = Some(rule);
        self
    }

    /// Fails the next `times` calls whose prompt contains `needle`.
    pub fn with_fault(self, needle: &str, kind: FaultKind, times: u32) -> Self {
        self.faults.lock().expect("fault table").push(Fault {
            needle: needle.to_string(),
            kind,
            remaining: times,
        });
        self
    }

    /// Holds every call for `delay`, to make overlap observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Largest number of calls that were in progress at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn respond(&self, request: &ProviderRequest) -> Result<String, TransportError> {
        {
            let mut faults = self.faults.lock().expect("fault table");
            if let Some(f) = faults
                .iter_mut()
                .find(|f| f.remaining > 0 && request.prompt.contains(&f.needle))
            {
                f.remaining -= 1;
                return Err(match f.kind {
                    FaultKind::Transient => TransportError::new(TransportErrorKind::Transient, "injected 503"),
                    FaultKind::Auth => TransportError::new(TransportErrorKind::Auth, "injected 401"),
                });
            }
        }
        if let Some(e) = self.transcript.get(&request.key()) {
            return Ok(e.text.clone());
        }
        if let Some(t) = self.scripted.get(&request.prompt) {
            return Ok(t.clone());
        }
        match &self.synth {
            Some(SynthRule::Fixed(t)) => Ok(t.clone()),
            Some(SynthRule::EchoFirstLine) => Ok(prompt_context(&request.prompt)
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("")
                .to_string()),
            Some(SynthRule::Heuristic) => Ok(heuristic(&request.params.model_id, &request.prompt)),
            None => Err(TransportError::new(
                TransportErrorKind::ReplayMiss,
                format!("no transcript entry for {}", request.key()),
            )),
        }
    }
}

impl Transport for MockTransport {
    fn call(&self, request: &ProviderRequest) -> Result<Completion, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let result = self.respond(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let text = result?;
        if let Some(e) = self.transcript.get(&request.key()) {
            return Ok(Completion { text, usage: e.usage });
        }
        let usage = Usage {
            prompt_tokens: request.prompt.split_whitespace().count() as u64,
            completion_tokens: text.split_whitespace().count() as u64,
        };
        Ok(Completion { text, usage })
    }

    fn is_live(&self) -> bool {
        false
    }
}

fn hash64(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// The context slot of a prompt rendered from the bundled templates.
fn prompt_context(prompt: &str) -> &str {
    if prompt.starts_with("Paraphrase") {
        let at = ["Documents: ", "Document: "]
            .iter()
            .filter_map(|m| prompt.rfind(m).map(|i| i + m.len()))
            .max();
        return at.map(|i| &prompt[i..]).unwrap_or(prompt);
    }
    if let Some(i) = prompt.rfind("Passage: ") {
        let rest = &prompt[i + "Passage: ".len()..];
        return rest.split("\nQuestion:").next().unwrap_or(rest);
    }
    match (prompt.find("\n\n"), prompt.rfind("\n\n")) {
        (Some(a), Some(b)) if b > a => &prompt[a + 2..b],
        _ => prompt,
    }
}

fn heuristic(model: &str, prompt: &str) -> String {
    let context = prompt_context(prompt);
    if prompt.starts_with("Paraphrase") {
        let mut position = 0usize;
        let lines: Vec<String> = context
            .lines()
            .map(|line| {
                let kept: Vec<&str> = line
                    .split_whitespace()
                    .filter(|w| *w != "Title:")
                    .filter(|w| {
                        position += 1;
                        !hash64(&[model, &position.to_string(), w]).is_multiple_of(7)
                    })
                    .collect();
                kept.join(" ")
            })
            .filter(|l| !l.is_empty())
            .collect();
        // naming the model keeps paraphrases distinct even when no word is dropped
        return format!("In short ({model}):\n{}", lines.join("\n"));
    }
    let instruction = prompt.lines().next().unwrap_or("");
    let h = hash64(&[model, context]);
    if instruction.contains("yes or no") {
        return if h.is_multiple_of(2) { "Yes.".into() } else { "No, it does not.".into() };
    }
    if instruction.contains("one of A, B") {
        let letter = (b'A' + (h % 8) as u8) as char;
        return format!("({letter})");
    }
    // capitalized runs, broken at punctuation and line ends
    let mut spans: Vec<String> = Vec::new();
    for line in context.lines() {
        let mut current: Vec<&str> = Vec::new();
        for w in line.split_whitespace().filter(|w| *w != "Title:") {
            let clean = w.trim_matches(|c: char| !c.is_alphanumeric());
            if clean.chars().next().is_some_and(|c| c.is_uppercase() || c.is_ascii_digit()) {
                current.push(clean);
            } else if !current.is_empty() {
                spans.push(current.join(" "));
                current.clear();
            }
            if w.ends_with([',', '.', ';', ':']) && !current.is_empty() {
                spans.push(current.join(" "));
                current.clear();
            }
        }
        if !current.is_empty() {
            spans.push(current.join(" "));
        }
    }
    if spans.is_empty() {
        return context.split_whitespace().next().unwrap_or("unknown").to_string();
    }
    spans[(h % spans.len() as u64) as usize].clone()
}
