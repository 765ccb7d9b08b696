//! KILT-style Natural Questions.
//!
//! One JSON object per line: `id`, `input` (the question) and `output`, a
//! list of `{answer, provenance: [{title, text, ...}]}` entries. Provenance
//! entries must carry the passage `text`; the plain KILT release only has
//! Wikipedia pointers and has to be joined with the knowledge source first.

use std::path::Path;

use serde::Deserialize;

use super::{read_file, Benchmark, DatasetError, LoadOutcome, Passage, QAInstance};

#[derive(Debug, Deserialize)]
struct KiltRecord {
    id: serde_json::Value,
    input: String,
    #[serde(default)]
    output: Vec<KiltOutput>,
}

#[derive(Debug, Deserialize)]
struct KiltOutput {
    answer: Option<String>,
    #[serde(default)]
    provenance: Vec<KiltProvenance>,
}

#[derive(Debug, Deserialize)]
struct KiltProvenance {
    title: Option<String>,
    text: Option<String>,
}

/// First provenance passage (in order) whose body contains any accepted
/// answer as a case-sensitive substring.
pub fn select_gold_nq<S: AsRef<str>>(provenances: &[Passage], answers: &[S]) -> Result<Passage, DatasetError> {
    provenances
        .iter()
        .find(|p| {
            answers.iter().any(|a| {
                let a = a.as_ref();
                !a.is_empty() && p.body.contains(a)
            })
        })
        .cloned()
        .ok_or(DatasetError::NoGold)
}

fn id_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Loads NQ, keeping instances whose provenance contains an answer. `limit`
/// truncates after filtering.
pub fn load_nq(path: &Path, limit: Option<usize>) -> Result<LoadOutcome, DatasetError> {
    let mut outcome = LoadOutcome::default();
    if limit == Some(0) {
        return Ok(outcome);
    }
    let text = read_file(path)?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let malformed = |message: String| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let record: KiltRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;

        let mut answers: Vec<String> = Vec::new();
        let mut provenances = Vec::new();
        for out in &record.output {
            if let Some(a) = out.answer.as_ref().filter(|a| !a.trim().is_empty()) {
                if !answers.contains(a) {
                    answers.push(a.clone());
                }
            }
            for prov in &out.provenance {
                let body = prov.text.as_ref().ok_or_else(|| {
                    malformed("provenance entry without passage `text`".to_string())
                })?;
                if let Some(p) = Passage::new(prov.title.clone(), body.clone()) {
                    provenances.push(p);
                }
            }
        }

        let id = id_text(&record.id);
        if answers.is_empty() {
            outcome.skip(id, "no answer candidates");
            continue;
        }
        match select_gold_nq(&provenances, &answers) {
            Ok(gold) => outcome.instances.push(QAInstance {
                id,
                benchmark: Benchmark::Nq,
                question: record.input,
                accepted_answers: answers,
                choices: None,
                gold_passages: vec![gold],
            }),
            Err(_) => outcome.skip(id, "no provenance passage contains an answer"),
        }
        if Some(outcome.instances.len()) == limit {
            break;
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::LoadStatus;
    use std::io::Write;

    fn p(body: &str) -> Passage {
        Passage { title: Some("Boom (P.O.D. song)".into()), body: body.into() }
    }

    #[test]
    fn selects_first_answer_bearing_passage() {
        let without = p("\"Boom\" is a song by American rock band P.O.D.");
        let with = p("It was released in May 2002 as the third single.");
        let later = p("Also May 2002.");
        let gold = select_gold_nq(&[without, with.clone(), later], &["May 2002"]).unwrap();
        assert_eq!(gold, with);
        assert_eq!(select_gold_nq(std::slice::from_ref(&with), &["May 2002"]).unwrap(), with);
        assert!(matches!(select_gold_nq(&[p("nothing")], &["May 2002"]), Err(DatasetError::NoGold)));
        // case-sensitive
        assert!(select_gold_nq(&[p("may 2002")], &["May 2002"]).is_err());
    }

    #[test]
    fn malformed_line_reports_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"1","input":"q","output":[{{"answer":"a","provenance":[{{"title":"t","text":"a"}}]}}]}}"#).unwrap();
        writeln!(f, "{{not json").unwrap();
        let err = load_nq(f.path(), None).unwrap_err();
        assert!(matches!(err, DatasetError::Malformed { line: 2, .. }));
    }

    #[test]
    fn empty_survivors_status() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"1","input":"q","output":[{{"answer":"zzz","provenance":[{{"title":"t","text":"a"}}]}}]}}"#).unwrap();
        let out = load_nq(f.path(), None).unwrap();
        assert_eq!(out.status(), LoadStatus::Empty);
        assert_eq!(out.skipped.len(), 1);
        assert!(load_nq(f.path(), Some(0)).unwrap().instances.is_empty());
    }
}
