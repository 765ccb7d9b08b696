//! HotPotQA dev files as distributed: a JSON array of items with `_id`,
//! `question`, `answer`, `supporting_facts` and `context`.
//!
//! The gold passages are the two context paragraphs whose titles appear in
//! `supporting_facts`, in the order those titles first appear there. The
//! sentence indices themselves are not used.

use std::path::Path;

use serde::Deserialize;

use super::{parse_records, read_file, Benchmark, DatasetError, LoadOutcome, Passage, QAInstance};

/// Number of leading dev items used by the reference experiment.
pub const HOTPOTQA_PAPER_LIMIT: usize = 1531;

#[derive(Debug, Deserialize)]
struct HotpotItem {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    answer: Option<String>,
    #[serde(default)]
    supporting_facts: Vec<(String, serde_json::Value)>,
    #[serde(default)]
    context: Vec<(String, Vec<String>)>,
}

fn gold_passages(item: &HotpotItem) -> Result<Vec<Passage>, String> {
    let mut titles: Vec<&str> = Vec::new();
    for (title, _) in &item.supporting_facts {
        if !titles.contains(&title.as_str()) {
            titles.push(title);
        }
    }
    if titles.len() != 2 {
        return Err(format!("{} supporting paragraphs, expected 2", titles.len()));
    }
    titles
        .iter()
        .map(|t| {
            let (_, sentences) = item
                .context
                .iter()
                .find(|(title, _)| title == t)
                .ok_or_else(|| format!("supporting paragraph `{t}` missing from context"))?;
            Passage::new(Some(t.to_string()), sentences.concat())
                .ok_or_else(|| format!("supporting paragraph `{t}` is empty"))
        })
        .collect()
}

/// The first `limit` items in file order (all when `None`); items without
/// exactly two usable gold paragraphs are skipped and reported.
pub fn load_hotpotqa(path: &Path, limit: Option<usize>) -> Result<LoadOutcome, DatasetError> {
    let text = read_file(path)?;
    let items: Vec<(usize, HotpotItem)> = parse_records(path, &text)?;
    let mut outcome = LoadOutcome::default();
    for (_, item) in items.into_iter().take(limit.unwrap_or(usize::MAX)) {
        let answer = match item.answer.as_ref().filter(|a| !a.trim().is_empty()) {
            Some(a) => a.clone(),
            None => {
                outcome.skip(item.id, "no answer");
                continue;
            }
        };
        match gold_passages(&item) {
            Ok(gold) => outcome.instances.push(QAInstance {
                id: item.id,
                benchmark: Benchmark::HotpotQa,
                question: item.question,
                accepted_answers: vec![answer],
                choices: None,
                gold_passages: gold,
            }),
            Err(reason) => outcome.skip(item.id, reason),
        }
    }
    Ok(outcome)
}
