//! Answer normalization and extraction, the way common QA evaluation scripts
//! phrase it: regex passes over the lowercased text.

use std::sync::LazyLock;

use regex::Regex;

static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{P}\p{S}]").unwrap());
static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").unwrap());
static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{Alphabetic}\p{N}]+").unwrap());
static LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-H]").unwrap());

/// Valid for text whose non-alphanumeric, non-space characters are all
/// punctuation or symbols (no control characters or bare combining marks).
pub fn normalize(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punct = PUNCT.replace_all(&lower, "");
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(output: &str, answers: &[&str]) -> bool {
    let got = normalize(output);
    answers.iter().any(|a| normalize(a) == got)
}

pub fn yes_no(text: &str) -> Option<&'static str> {
    let lower = text.to_lowercase();
    WORD.find_iter(&lower).find_map(|m| match m.as_str() {
        "yes" => Some("yes"),
        "no" => Some("no"),
        _ => None,
    })
}

/// The first A..H capital and whether an alphanumeric character touches it.
pub fn choice(text: &str) -> Option<(char, bool)> {
    let m = LETTER.find(text)?;
    let prev = text[..m.start()].chars().next_back();
    let next = text[m.end()..].chars().next();
    let touches = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    Some((m.as_str().chars().next().unwrap(), touches(prev) || touches(next)))
}

#[derive(serde::Deserialize)]
pub struct Corpus {
    pub normalize: Vec<(String, String)>,
    pub em: Vec<EmCase>,
    pub yes_no: Vec<(String, String)>,
    pub choice: Vec<ChoiceCase>,
}

#[derive(serde::Deserialize)]
pub struct EmCase {
    pub output: String,
    pub answers: Vec<String>,
    pub expected: bool,
}

#[derive(serde::Deserialize)]
pub struct ChoiceCase {
    pub input: String,
    pub label: String,
    pub embedded: bool,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.normalize.len() + self.em.len() + self.yes_no.len() + self.choice.len()
    }
}

pub fn corpus() -> Corpus {
    toml::from_str(include_str!("../fixtures/evaluator_cases.toml")).expect("evaluator corpus parses")
}

/// Pieces that exercise articles, case, punctuation from several scripts,
/// accents, digits and whitespace runs.
pub const PIECES: [&str; 29] = [
    "the", "The", "a", "A", "an", "AN", "yes", "No", "B", "(C)", "Eiffel", "caf\u{e9}", "\u{c9}cole",
    "1,000", ".", ",", "'", "\"", "-", "\u{2014}", "\u{201c}", "\u{bf}", "!", " ", "  ", "\t", "\n", "x", "7",
];

/// Checks every corpus case against both the library and the oracle.
pub fn check_corpus() -> Result<usize, String> {
    use kce_core::evaluation::{extract_choice, extract_yes_no, normalize_answer, score_em};
    let c = corpus();
    for (input, want) in &c.normalize {
        if normalize_answer(input) != *want || normalize(input) != *want {
            return Err(format!("normalize {input:?}: got {:?}, want {want:?}", normalize_answer(input)));
        }
    }
    for case in &c.em {
        let answers: Vec<&str> = case.answers.iter().map(String::as_str).collect();
        if score_em(&case.output, &answers) != case.expected || exact_match(&case.output, &answers) != case.expected {
            return Err(format!("exact match {:?} against {answers:?}", case.output));
        }
    }
    for (input, want) in &c.yes_no {
        let got = extract_yes_no(input).map_or("none", |v| v.as_str());
        if got != want || yes_no(input).unwrap_or("none") != want {
            return Err(format!("yes/no {input:?}: got {got}, want {want}"));
        }
    }
    for case in &c.choice {
        let want = case.label.chars().next().map(|l| (l, case.embedded));
        let got = extract_choice(&case.input).map(|x| (x.label, x.embedded));
        if got != want || choice(&case.input) != want {
            return Err(format!("choice {:?}: got {got:?}, want {want:?}", case.input));
        }
    }
    Ok(c.len())
}
