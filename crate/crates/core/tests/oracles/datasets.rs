//! Small hand-built benchmark files and what each loader must make of them.

use std::path::{Path, PathBuf};

use kce_core::datasets::{
    build_context, load_hotpotqa, HOTPOTQA_PAPER_LIMIT, load_nq, load_qasc, load_strategyqa,
    Passage,
};
use serde_json::json;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn lines(values: &[serde_json::Value]) -> String {
    values.iter().map(|v| v.to_string() + "\n").collect()
}

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn titled(title: &str, body: &str) -> Passage {
    Passage { title: Some(title.into()), body: body.into() }
}

/// Answer containment is case-sensitive; the first containing provenance
/// wins, across outputs in order.
pub fn check_nq(dir: &Path) -> Result<(), String> {
    let prov = |t: &str, body: &str| json!({"title": t, "text": body, "wikipedia_id": "1"});
    let path = write(
        dir,
        "nq.jsonl",
        &lines(&[
            json!({"id": "n1", "input": "capital of france", "output": [
                {"answer": "Paris", "provenance": [prov("Lyon", "Lyon is a city."), prov("France", "Paris is the capital."), prov("Paris", "Paris again.")]}
            ]}),
            json!({"id": "n2", "input": "moon landing year", "output": [
                {"answer": "1969", "provenance": [prov("Apollo 11", "Landed in July 1969.")]},
                {"answer": "July 1969", "provenance": [prov("Moon", "In July 1969 it happened.")]}
            ]}),
            json!({"id": "n3", "input": "lowercase only", "output": [
                {"answer": "Paris", "provenance": [prov("x", "paris, in lower case")]}
            ]}),
            json!({"id": "n4", "input": "no answers", "output": [
                {"provenance": [prov("x", "Some text.")]}
            ]}),
            json!({"id": 5, "input": "second output only", "output": [
                {"answer": "Everest", "provenance": [prov("Himalaya", "A mountain range.")]},
                {"answer": "Mount Everest", "provenance": [prov("Everest", "Mount Everest is the highest.")]}
            ]}),
        ]),
    );
    let out = load_nq(&path, None).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = out.instances.iter().map(|i| i.id.as_str()).collect();
    ensure(ids == ["n1", "n2", "5"], format!("NQ kept {ids:?}"))?;
    let skipped: Vec<&str> = out.skipped.iter().map(|s| s.item.as_str()).collect();
    ensure(skipped == ["n3", "n4"], format!("NQ skipped {skipped:?}"))?;
    let gold: Vec<&Passage> = out.instances.iter().map(|i| &i.gold_passages[0]).collect();
    ensure(*gold[0] == titled("France", "Paris is the capital."), format!("n1 gold {:?}", gold[0]))?;
    ensure(*gold[1] == titled("Apollo 11", "Landed in July 1969."), format!("n2 gold {:?}", gold[1]))?;
    ensure(*gold[2] == titled("Everest", "Mount Everest is the highest."), format!("5 gold {:?}", gold[2]))?;
    ensure(out.instances[1].accepted_answers == ["1969", "July 1969"], "n2 answers")?;
    ensure(build_context(&out.instances[0]) == "Title: France\nParis is the capital.", "n1 context")?;
    let limited = load_nq(&path, Some(2)).map_err(|e| e.to_string())?;
    ensure(limited.instances.len() == 2, "NQ limit counts kept instances")
}

/// The limit cuts the file before any item is skipped; gold paragraphs
/// follow first mention in the supporting facts.
pub fn check_hotpotqa(dir: &Path) -> Result<(), String> {
    let item = |id: &str, facts: serde_json::Value| {
        json!({
            "_id": id, "question": format!("question {id}"), "answer": "yes", "type": "bridge", "level": "easy",
            "supporting_facts": facts,
            "context": [["A", ["Alpha one.", " Alpha two."]], ["B", ["Beta."]], ["C", ["Gamma."]]]
        })
    };
    let path = write(
        dir,
        "hotpotqa.json",
        &serde_json::to_string(&json!([
            item("h1", json!([["B", 0], ["A", 1], ["B", 2]])),
            item("h2", json!([["A", 0], ["A", 1]])),
            item("h3", json!([["A", 0], ["C", 0]])),
            item("h4", json!([["C", 0], ["B", 0]])),
            item("h5", json!([["A", 0], ["B", 0]])),
        ]))
        .unwrap(),
    );
    let ids = |limit| -> Result<(Vec<String>, Vec<String>), String> {
        let out = load_hotpotqa(&path, limit).map_err(|e| e.to_string())?;
        Ok((
            out.instances.iter().map(|i| i.id.clone()).collect(),
            out.skipped.iter().map(|s| s.item.clone()).collect(),
        ))
    };
    ensure(ids(Some(3))? == (vec!["h1".into(), "h3".into()], vec!["h2".into()]), format!("prefix 3: {:?}", ids(Some(3))?))?;
    ensure(ids(None)?.0 == ["h1", "h3", "h4", "h5"], format!("all: {:?}", ids(None)?))?;
    let out = load_hotpotqa(&path, Some(1)).map_err(|e| e.to_string())?;
    ensure(
        out.instances[0].gold_passages == [titled("B", "Beta."), titled("A", "Alpha one. Alpha two.")],
        format!("h1 gold {:?}", out.instances[0].gold_passages),
    )?;
    ensure(
        build_context(&out.instances[0]) == "Title: B\nBeta.\n\nTitle: A\nAlpha one. Alpha two.",
        "h1 context",
    )?;
    ensure(HOTPOTQA_PAPER_LIMIT == 1531, "HotPotQA prefix length")
}

/// Only the first annotation counts; its paragraph ids are gathered across
/// every step in order, without repeats.
pub fn check_strategyqa(dir: &Path) -> Result<(), String> {
    let paragraphs = write(
        dir,
        "paragraphs.json",
        &json!({
            "P1": {"title": "Camel", "content": "Camels store fat."},
            "P2": {"title": "Desert", "content": "Deserts are dry."},
            "P3": {"title": "Water", "content": "Water is wet."},
            "P9": {"title": "Other", "content": "Never used."}
        })
        .to_string(),
    );
    let path = write(
        dir,
        "strategyqa.json",
        &json!([
            {"qid": "s1", "question": "Can a camel cross a desert?", "answer": true, "evidence": [
                [[["P1", "P2"]], ["operation"], [["P3"], ["P1"]]],
                [[["P9"]]]
            ]},
            {"qid": "s2", "question": "Only later annotators cite paragraphs?", "answer": false, "evidence": [
                [["no_evidence"], ["operation"]],
                [[["P1"]]]
            ]},
            {"qid": "s3", "question": "Is water wet?", "answer": false, "evidence": [[[["P3"]]]]},
            {"qid": "s4", "question": "Unknown paragraph?", "answer": true, "evidence": [[[["P404"]]]]}
        ])
        .to_string(),
    );
    let out = load_strategyqa(&path, &paragraphs).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = out.instances.iter().map(|i| i.id.as_str()).collect();
    ensure(ids == ["s1", "s3"], format!("StrategyQA kept {ids:?}"))?;
    let skipped: Vec<&str> = out.skipped.iter().map(|s| s.item.as_str()).collect();
    ensure(skipped == ["s2", "s4"], format!("StrategyQA skipped {skipped:?}"))?;
    let s1 = &out.instances[0];
    ensure(
        s1.gold_passages
            == [titled("Camel", "Camels store fat."), titled("Desert", "Deserts are dry."), titled("Water", "Water is wet.")],
        format!("s1 gold {:?}", s1.gold_passages),
    )?;
    ensure(s1.accepted_answers == ["yes"] && out.instances[1].accepted_answers == ["no"], "yes/no answers")
}

/// The two facts, in order and untitled, make the gold context.
pub fn check_qasc(dir: &Path) -> Result<(), String> {
    let choices = |n: usize| -> Vec<serde_json::Value> {
        ["A", "B", "C", "D", "E", "F", "G", "H"][..n]
            .iter()
            .map(|l| json!({"label": l, "text": format!("option {l}")}))
            .collect()
    };
    let item = |id: &str, n: usize, key: &str| {
        json!({
            "id": id, "answerKey": key,
            "question": {"stem": "What conducts electricity?", "choices": choices(n)},
            "fact1": "Metals conduct electricity.", "fact2": "Copper is a metal.",
            "combinedfact": "Copper conducts electricity."
        })
    };
    let path = write(dir, "qasc.jsonl", &lines(&[item("q1", 8, "C"), item("q2", 7, "A"), item("q3", 8, "Z")]));
    let out = load_qasc(&path).map_err(|e| e.to_string())?;
    ensure(out.instances.len() == 1 && out.skipped.len() == 2, format!("QASC kept {}", out.instances.len()))?;
    let q1 = &out.instances[0];
    ensure(
        build_context(q1) == "Metals conduct electricity.\n\nCopper is a metal.",
        format!("q1 context {:?}", build_context(q1)),
    )?;
    ensure(q1.accepted_answers == ["C"], "q1 answer")?;
    ensure(q1.question.starts_with("What conducts electricity? (A) option A (B) option B"), format!("q1 question {}", q1.question))
}

pub fn check_all_filters() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    check_nq(dir.path())?;
    check_hotpotqa(dir.path())?;
    check_strategyqa(dir.path())?;
    check_qasc(dir.path())
}

/// Instance counts of the full released files, when `KCE_DATA_DIR` holds
/// them. Missing files are reported as skipped.
pub const FULL_COUNTS: [(&str, usize); 4] =
    [("nq", 2532), ("hotpotqa", 1531), ("strategyqa", 2290), ("qasc", 926)];

pub fn check_full_counts() -> Result<Vec<String>, String> {
    let Some(root) = std::env::var_os("KCE_DATA_DIR").map(PathBuf::from) else {
        return Ok(vec!["KCE_DATA_DIR unset".into()]);
    };
    let mut skipped = Vec::new();
    for (name, want) in FULL_COUNTS {
        let got = match name {
            "nq" => {
                let p = root.join("nq-dev-kilt.jsonl");
                p.exists().then(|| load_nq(&p, None))
            }
            "hotpotqa" => {
                let p = root.join("hotpot_dev_distractor_v1.json");
                p.exists().then(|| load_hotpotqa(&p, Some(HOTPOTQA_PAPER_LIMIT)))
            }
            "strategyqa" => {
                let (p, q) = (root.join("strategyqa_train.json"), root.join("strategyqa_train_paragraphs.json"));
                (p.exists() && q.exists()).then(|| load_strategyqa(&p, &q))
            }
            _ => {
                let p = root.join("qasc_dev.jsonl");
                p.exists().then(|| load_qasc(&p))
            }
        };
        match got {
            None => skipped.push(format!("{name} file absent")),
            Some(out) => {
                let n = out.map_err(|e| e.to_string())?.instances.len();
                ensure(n == want, format!("{name}: {n} instances, expected {want}"))?;
            }
        }
    }
    Ok(skipped)
}
