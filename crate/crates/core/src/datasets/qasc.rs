//! QASC dev split: `id`, `question.stem`, `question.choices[{label, text}]`,
//! `answerKey`, `fact1`, `fact2` and usually `formatted_question`, one item
//! per line (a JSON array is accepted too).

use std::path::Path;

use serde::Deserialize;

use super::{
    parse_records, read_file, Benchmark, Choice, DatasetError, LoadOutcome, Passage, QAInstance,
    QASC_LABELS,
};

#[derive(Debug, Deserialize)]
struct QascItem {
    id: String,
    question: QascQuestion,
    #[serde(rename = "answerKey")]
    answer_key: String,
    fact1: String,
    fact2: String,
    formatted_question: Option<String>,
}

#[derive(Debug, Deserialize)]
struct QascQuestion {
    stem: String,
    choices: Vec<Choice>,
}

/// The distributed question text with its options inline; rebuilt as
/// `stem (A) ... (B) ...` when the item lacks `formatted_question`.
fn question_text(item: &QascItem) -> String {
    match &item.formatted_question {
        Some(q) => q.clone(),
        None => {
            let mut q = item.question.stem.clone();
            for c in &item.question.choices {
                q.push_str(&format!(" ({}) {}", c.label, c.text));
            }
            q
        }
    }
}

pub fn load_qasc(path: &Path) -> Result<LoadOutcome, DatasetError> {
    let items: Vec<(usize, QascItem)> = parse_records(path, &read_file(path)?)?;
    let mut outcome = LoadOutcome::default();
    for (_, item) in items {
        let labels: Vec<&str> = item.question.choices.iter().map(|c| c.label.as_str()).collect();
        if labels.len() != 8 {
            outcome.skip(item.id, format!("{} options, expected 8", labels.len()));
            continue;
        }
        if labels != QASC_LABELS {
            outcome.skip(item.id, "options not labeled A..H in order");
            continue;
        }
        if !QASC_LABELS.contains(&item.answer_key.as_str()) {
            outcome.skip(item.id, format!("answer key `{}` is not a label", item.answer_key));
            continue;
        }
        let facts = [item.fact1.clone(), item.fact2.clone()]
            .into_iter()
            .map(|f| Passage::new(None, f))
            .collect::<Option<Vec<_>>>();
        let Some(facts) = facts else {
            outcome.skip(item.id, "empty seed fact");
            continue;
        };
        outcome.instances.push(QAInstance {
            question: question_text(&item),
            id: item.id,
            benchmark: Benchmark::Qasc,
            accepted_answers: vec![item.answer_key],
            choices: Some(item.question.choices),
            gold_passages: facts,
        });
    }
    Ok(outcome)
}
