use kce_core::analysis::{self, ResultsTable};
use kce_core::datasets::{Benchmark, Choice, Passage, QAInstance, QASC_LABELS};
use kce_core::evaluation::{judge, Condition};
use kce_core::microworld::{WorldSpec, UNDEFINED_ARGMAX};
use serde::Serialize;

pub const SAMPLE_WORLD: &str = r#"vocab = ["a", "b", "c"]
max_len = 3
queries = ["ab"]
answers = ["a", "b", "c"]
answer_star = { ab = "c" }
k = [1, 3]

[corpus]
coverage = 0.25

[relevance]
kind = "softmax_overlap"
temperature = 0.5

[reader]
kind = "softmax_overlap"
temperature = 1.0
"#;

#[derive(Debug, Serialize, PartialEq)]
pub struct DecompositionView {
    pub query: String,
    pub answer_star: String,
    pub coverage: f64,
    pub k: usize,
    pub full_mass: f64,
    pub corpus_mass: f64,
    pub topk_mass: f64,
    pub kce: f64,
    pub retrieval_error: f64,
    pub argmax_full: String,
    pub argmax_corpus: String,
    pub argmax_topk: String,
    pub generator_reach: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SweepPoint {
    pub query: String,
    pub coverage: f64,
    pub k: usize,
    pub kce: f64,
    pub retrieval_error: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ScoreView {
    pub extracted: Option<String>,
    pub correct: bool,
    pub note: Option<String>,
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn parse(world_toml: &str) -> Result<WorldSpec, String> {
    WorldSpec::from_toml(world_toml).map_err(|e| e.to_string())
}

pub fn decompose(world_toml: &str, coverage: f64, k: usize) -> Result<String, String> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(format!("coverage {coverage} outside [0, 1]"));
    }
    let mut spec = parse(world_toml)?;
    spec.corpus.members = None;
    spec.corpus.coverage = Some(coverage);
    spec.k = vec![k];
    let rows = spec.simulate().map_err(|e| e.to_string())?;
    let undefined = |a: Option<String>| a.unwrap_or_else(|| UNDEFINED_ARGMAX.to_string());
    let views: Vec<DecompositionView> = rows
        .into_iter()
        .map(|r| {
            let d = r.decomposition;
            DecompositionView {
                query: d.query,
                answer_star: d.answer_star,
                coverage: r.coverage,
                k: d.k,
                full_mass: d.full_mass,
                corpus_mass: d.corpus_mass,
                topk_mass: d.topk_mass,
                kce: d.kce,
                retrieval_error: d.retrieval_error,
                argmax_full: undefined(d.argmax_full),
                argmax_corpus: undefined(d.argmax_corpus),
                argmax_topk: undefined(d.argmax_topk),
                generator_reach: r.generator_reach,
            }
        })
        .collect();
    Ok(json(&views))
}

pub fn sweep(world_toml: &str) -> Result<String, String> {
    let rows = parse(world_toml)?.sweep().map_err(|e| e.to_string())?;
    let points: Vec<SweepPoint> = rows
        .into_iter()
        .map(|r| SweepPoint {
            query: r.decomposition.query,
            coverage: r.coverage,
            k: r.decomposition.k,
            kce: r.decomposition.kce,
            retrieval_error: r.decomposition.retrieval_error,
        })
        .collect();
    Ok(json(&points))
}

pub fn score(benchmark: &str, output: &str, answers: &str) -> Result<String, String> {
    let benchmark: Benchmark = benchmark.parse().map_err(|e: kce_core::datasets::DatasetError| e.to_string())?;
    let accepted: Vec<String> =
        answers.lines().map(str::trim).filter(|a| !a.is_empty()).map(str::to_string).collect();
    if accepted.is_empty() {
        return Err("give at least one accepted answer".into());
    }
    let choices = (benchmark == Benchmark::Qasc).then(|| {
        QASC_LABELS.iter().map(|l| Choice { label: l.to_string(), text: String::new() }).collect()
    });
    let instance = QAInstance {
        id: "demo".into(),
        benchmark,
        question: String::new(),
        accepted_answers: accepted,
        choices,
        gold_passages: vec![Passage { title: None, body: String::new() }],
    };
    let j = judge(benchmark, &instance, output).map_err(|e| e.to_string())?;
    Ok(json(&ScoreView { extracted: j.extracted, correct: j.correct, note: j.note }))
}

pub fn average_gap(cells: &[f64]) -> Result<f64, String> {
    if cells.len() != 6 {
        return Err(format!("expected 6 cells, got {}", cells.len()));
    }
    if let Some(bad) = cells.iter().find(|c| !c.is_finite()) {
        return Err(format!("cell {bad} is not a number"));
    }
    let names = |xs: [&str; 2]| xs.iter().map(|s| s.to_string()).collect();
    let mut table = ResultsTable::new(names(["one", "two"]), names(["first", "second"]));
    for (ri, reader) in ["one", "two"].iter().enumerate() {
        table.set(Benchmark::HotpotQa, reader, Condition::Gold, cells[ri * 3]);
        table.set(Benchmark::HotpotQa, reader, Condition::Paraphrased("first".into()), cells[ri * 3 + 1]);
        table.set(Benchmark::HotpotQa, reader, Condition::Paraphrased("second".into()), cells[ri * 3 + 2]);
    }
    analysis::average_gap(&table, Benchmark::HotpotQa).map_err(|e| e.to_string())
}
