//! StrategyQA training split plus its paragraph corpus.
//!
//! `evidence` holds one entry per annotator; each is a list of decomposition
//! steps whose elements are lists of paragraph ids or the markers
//! `"operation"` / `"no_evidence"`. Only the first annotation is used, and
//! its paragraph ids are resolved against the paragraphs file (an object
//! mapping id to `{title, content}`).

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::{parse_records, read_file, Benchmark, DatasetError, LoadOutcome, Passage, QAInstance};

#[derive(Debug, Deserialize)]
struct StrategyItem {
    qid: String,
    question: String,
    answer: bool,
    #[serde(default)]
    evidence: Vec<Value>,
}

#[derive(Debug, Deserialize)]
struct Paragraph {
    title: Option<String>,
    #[serde(alias = "text")]
    content: String,
}

fn collect_ids(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) if s != "operation" && s != "no_evidence" => {
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        Value::Array(items) => items.iter().for_each(|i| collect_ids(i, out)),
        _ => {}
    }
}

pub fn load_strategyqa(path: &Path, paragraphs_path: &Path) -> Result<LoadOutcome, DatasetError> {
    let paragraphs: HashMap<String, Paragraph> = serde_json::from_str(&read_file(paragraphs_path)?)
        .map_err(|e| DatasetError::Format {
            path: paragraphs_path.to_path_buf(),
            message: e.to_string(),
        })?;
    let items: Vec<(usize, StrategyItem)> = parse_records(path, &read_file(path)?)?;

    let mut outcome = LoadOutcome::default();
    for (_, item) in items {
        let mut ids = Vec::new();
        if let Some(first) = item.evidence.first() {
            collect_ids(first, &mut ids);
        }
        if ids.is_empty() {
            outcome.skip(item.qid, "first decomposition has no evidence paragraphs");
            continue;
        }
        let mut gold = Vec::with_capacity(ids.len());
        let mut missing = None;
        for id in &ids {
            match paragraphs.get(id) {
                Some(p) => {
                    if let Some(passage) = Passage::new(p.title.clone(), p.content.clone()) {
                        gold.push(passage);
                    }
                }
                None => {
                    missing = Some(id.clone());
                    break;
                }
            }
        }
        if let Some(id) = missing {
            outcome.skip(item.qid, format!("paragraph `{id}` not in the paragraph corpus"));
            continue;
        }
        if gold.is_empty() {
            outcome.skip(item.qid, "evidence paragraphs are empty");
            continue;
        }
        outcome.instances.push(QAInstance {
            id: item.qid,
            benchmark: Benchmark::StrategyQa,
            question: item.question,
            accepted_answers: vec![if item.answer { "yes" } else { "no" }.to_string()],
            choices: None,
            gold_passages: gold,
        });
    }
    Ok(outcome)
}
