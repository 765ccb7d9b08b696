//! Result grids, gold-vs-paraphrase gaps, reader accordance and flips.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::datasets::{build_context, Benchmark, QAInstance};
use crate::evaluation::{format_percent, score_run, Condition, EvalError, Metric, MetricKind, Prediction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("missing cells for {benchmark}: {}", format_cells(.cells))]
    MissingCells { benchmark: Benchmark, cells: Vec<(String, Condition)> },
    #[error("gap needs at least one reader and one paraphraser")]
    NoPairs,
    #[error("prediction sets cover different instances (only first: {only_first:?}, only second: {only_second:?})")]
    CoverageMismatch { only_first: Vec<String>, only_second: Vec<String> },
    #[error("instance `{0}` appears twice in one prediction set")]
    Duplicate(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn format_cells(cells: &[(String, Condition)]) -> String {
    cells.iter().map(|(r, c)| format!("{r}/{c}")).collect::<Vec<_>>().join(", ")
}

/// Percent scores keyed by (benchmark, reader, condition).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub readers: Vec<String>,
    pub paraphrasers: Vec<String>,
    cells: BTreeMap<(Benchmark, String, Condition), f64>,
}

impl ResultsTable {
    pub fn new(readers: Vec<String>, paraphrasers: Vec<String>) -> Self {
        Self { readers, paraphrasers, cells: BTreeMap::new() }
    }

    pub fn set(&mut self, benchmark: Benchmark, reader: &str, condition: Condition, percent: f64) {
        self.cells.insert((benchmark, reader.to_string(), condition), percent);
    }

    pub fn get(&self, benchmark: Benchmark, reader: &str, condition: &Condition) -> Option<f64> {
        self.cells.get(&(benchmark, reader.to_string(), condition.clone())).copied()
    }

    /// Gold first, then one condition per paraphraser.
    pub fn conditions(&self) -> Vec<Condition> {
        std::iter::once(Condition::Gold)
            .chain(self.paraphrasers.iter().map(|p| Condition::Paraphrased(p.clone())))
            .collect()
    }

    pub fn missing_cells(&self, benchmark: Benchmark) -> Vec<(String, Condition)> {
        let mut missing = Vec::new();
        for r in &self.readers {
            for c in self.conditions() {
                if self.get(benchmark, r, &c).is_none() {
                    missing.push((r.clone(), c));
                }
            }
        }
        missing
    }
}

/// Mean over every (reader, paraphraser) pair of the paraphrased score minus
/// the same reader's gold score, in percentage points.
pub fn average_gap(table: &ResultsTable, benchmark: Benchmark) -> Result<f64, AnalysisError> {
    if table.readers.is_empty() || table.paraphrasers.is_empty() {
        return Err(AnalysisError::NoPairs);
    }
    let missing = table.missing_cells(benchmark);
    if !missing.is_empty() {
        return Err(AnalysisError::MissingCells { benchmark, cells: missing });
    }
    let mut total = 0.0;
    for r in &table.readers {
        let gold = table.get(benchmark, r, &Condition::Gold).expect("checked");
        for p in &table.paraphrasers {
            total += table.get(benchmark, r, &Condition::Paraphrased(p.clone())).expect("checked") - gold;
        }
    }
    Ok(total / (table.readers.len() * table.paraphrasers.len()) as f64)
}

/// Agreement of two readers' verdicts over the same instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccordanceTable {
    pub condition: Condition,
    pub reader_a: String,
    pub reader_b: String,
    pub both_correct: u64,
    pub both_wrong: u64,
    pub only_first: u64,
    pub only_second: u64,
}

impl AccordanceTable {
    pub fn total(&self) -> u64 {
        self.both_correct + self.both_wrong + self.only_first + self.only_second
    }

    /// `[both_correct, both_wrong, only_first, only_second]` in percent; zeros
    /// for an empty comparison.
    pub fn percentages(&self) -> [f64; 4] {
        let total = self.total();
        let pct = |n: u64| if total == 0 { 0.0 } else { n as f64 * 100.0 / total as f64 };
        [pct(self.both_correct), pct(self.both_wrong), pct(self.only_first), pct(self.only_second)]
    }
}

fn verdicts<'a>(preds: &'a [Prediction], condition: &Condition) -> Result<BTreeMap<&'a str, bool>, AnalysisError> {
    let mut out = BTreeMap::new();
    for p in preds.iter().filter(|p| &p.condition == condition) {
        if out.insert(p.instance_id.as_str(), p.correct).is_some() {
            return Err(AnalysisError::Duplicate(p.instance_id.clone()));
        }
    }
    Ok(out)
}

fn check_coverage<V>(a: &BTreeMap<&str, V>, b: &BTreeMap<&str, V>) -> Result<(), AnalysisError> {
    let ka: BTreeSet<&str> = a.keys().copied().collect();
    let kb: BTreeSet<&str> = b.keys().copied().collect();
    if ka != kb {
        return Err(AnalysisError::CoverageMismatch {
            only_first: ka.difference(&kb).map(|s| s.to_string()).collect(),
            only_second: kb.difference(&ka).map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

/// Splits the instances both readers answered under `condition` into the four
/// agreement cells. Reader names are taken from the predictions.
pub fn accordance(
    pred_a: &[Prediction],
    pred_b: &[Prediction],
    condition: &Condition,
) -> Result<AccordanceTable, AnalysisError> {
    let a = verdicts(pred_a, condition)?;
    let b = verdicts(pred_b, condition)?;
    check_coverage(&a, &b)?;
    let name = |preds: &[Prediction]| {
        preds.iter().find(|p| &p.condition == condition).map(|p| p.reader.clone()).unwrap_or_default()
    };
    let mut table = AccordanceTable {
        condition: condition.clone(),
        reader_a: name(pred_a),
        reader_b: name(pred_b),
        both_correct: 0,
        both_wrong: 0,
        only_first: 0,
        only_second: 0,
    };
    for (id, &ca) in &a {
        match (ca, b[id]) {
            (true, true) => table.both_correct += 1,
            (false, false) => table.both_wrong += 1,
            (true, false) => table.only_first += 1,
            (false, true) => table.only_second += 1,
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Transition {
    /// Wrong with gold, right with paraphrase.
    #[serde(rename = "X->O")]
    WrongToRight,
    #[serde(rename = "O->X")]
    RightToWrong,
    #[serde(rename = "O->O")]
    RightToRight,
    #[serde(rename = "X->X")]
    WrongToWrong,
}

impl Transition {
    pub fn from_verdicts(gold: bool, paraphrased: bool) -> Self {
        match (gold, paraphrased) {
            (false, true) => Transition::WrongToRight,
            (true, false) => Transition::RightToWrong,
            (true, true) => Transition::RightToRight,
            (false, false) => Transition::WrongToWrong,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Transition::WrongToRight => "X->O",
            Transition::RightToWrong => "O->X",
            Transition::RightToRight => "O->O",
            Transition::WrongToWrong => "X->X",
        }
    }

    pub fn is_flip(self) -> bool {
        matches!(self, Transition::WrongToRight | Transition::RightToWrong)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Flip {
    pub instance_id: String,
    pub transition: Transition,
    pub gold_output: String,
    pub paraph_output: String,
}

/// Pairs one reader's gold and paraphrased predictions by instance, sorted by
/// transition and then by order in `gold`.
pub fn list_flips(gold: &[Prediction], paraph: &[Prediction]) -> Result<Vec<Flip>, AnalysisError> {
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in paraph {
        if by_id.insert(p.instance_id.as_str(), p).is_some() {
            return Err(AnalysisError::Duplicate(p.instance_id.clone()));
        }
    }
    let mut gold_ids: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for g in gold {
        if gold_ids.insert(g.instance_id.as_str(), g).is_some() {
            return Err(AnalysisError::Duplicate(g.instance_id.clone()));
        }
    }
    check_coverage(&gold_ids, &by_id)?;
    let mut flips: Vec<Flip> = gold
        .iter()
        .map(|g| {
            let p = by_id[g.instance_id.as_str()];
            Flip {
                instance_id: g.instance_id.clone(),
                transition: Transition::from_verdicts(g.correct, p.correct),
                gold_output: g.raw_output.clone(),
                paraph_output: p.raw_output.clone(),
            }
        })
        .collect();
    flips.sort_by_key(|f| f.transition);
    Ok(flips)
}

/// Everything needed to write the report for one benchmark run.
#[derive(Debug, Clone, Copy)]
pub struct ReportInput<'a> {
    pub benchmark: Benchmark,
    pub readers: &'a [String],
    pub paraphrasers: &'a [String],
    pub instances: &'a [QAInstance],
    /// paraphraser → instance id → paraphrased context.
    pub paraphrases: &'a BTreeMap<String, BTreeMap<String, String>>,
    pub predictions: &'a [Prediction],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub results_csv: String,
    pub table_md: String,
    pub accordance_csv: String,
    pub flips_jsonl: String,
    pub warnings: Vec<String>,
}

pub const RESULTS_CSV_HEADER: [&str; 8] = [
    "benchmark",
    "reader",
    "condition",
    "metric_kind",
    "numerator",
    "denominator",
    "value_percent",
    "delta_vs_gold",
];

pub const ACCORDANCE_CSV_HEADER: [&str; 12] = [
    "condition",
    "reader_a",
    "reader_b",
    "both_correct",
    "both_wrong",
    "only_a",
    "only_b",
    "total",
    "both_correct_pct",
    "both_wrong_pct",
    "only_a_pct",
    "only_b_pct",
];

#[derive(Serialize)]
struct FlipRecord<'a> {
    reader: &'a str,
    paraphraser: &'a str,
    transition: Transition,
    instance_id: &'a str,
    question: &'a str,
    gold_context: String,
    paraph_context: &'a str,
    gold_output: &'a str,
    paraph_output: &'a str,
}

fn marker(delta: f64) -> &'static str {
    if delta > 0.0 {
        "+"
    } else if delta < 0.0 {
        "-"
    } else {
        "="
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Renders the results CSV, a Markdown table in the layout of the reader ×
/// condition grid, the accordance CSV and the flip listing. Output depends
/// only on the input values, not on prediction order.
pub fn emit_report(input: &ReportInput<'_>) -> Result<ReportFiles, AnalysisError> {
    let b = input.benchmark;
    let kind = MetricKind::for_benchmark(b);
    let scores: BTreeMap<(String, Condition), Metric> = score_run(b, input.instances, input.predictions)?;
    let mut table = ResultsTable::new(input.readers.to_vec(), input.paraphrasers.to_vec());
    for ((r, c), m) in &scores {
        if let Some(p) = m.percent() {
            table.set(b, r, c.clone(), p);
        }
    }
    let conditions = table.conditions();
    let empty = input.predictions.is_empty();
    let mut warnings = Vec::new();

    // results.csv
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_CSV_HEADER).expect("in-memory write");
    if !empty {
        for r in input.readers {
            let gold = table.get(b, r, &Condition::Gold);
            for c in &conditions {
                let m = scores.get(&(r.clone(), c.clone()));
                let value = table.get(b, r, c);
                let delta = match (c, value, gold) {
                    (Condition::Paraphrased(_), Some(v), Some(g)) => format!("{:.4}", v - g),
                    _ => String::new(),
                };
                w.write_record([
                    b.as_str().to_string(),
                    r.clone(),
                    c.to_string(),
                    kind.as_str().to_string(),
                    m.map(|m| m.numerator.to_string()).unwrap_or_default(),
                    m.map(|m| m.denominator.to_string()).unwrap_or_default(),
                    format_percent(value),
                    delta,
                ])
                .expect("in-memory write");
            }
        }
    }
    let results_csv = csv_string(w);

    // table.md
    let metric_label = match kind {
        MetricKind::ExactMatch => "exact match (%)",
        MetricKind::Accuracy => "accuracy (%)",
    };
    let gap = if input.readers.len() < 2 {
        warnings.push("average gap omitted: needs at least two readers".to_string());
        None
    } else {
        match average_gap(&table, b) {
            Ok(g) => Some(g),
            Err(e) => {
                warnings.push(format!("average gap omitted: {e}"));
                None
            }
        }
    };
    let mut md = String::new();
    md.push_str(&format!("# {} {}\n\n", b.display_name(), metric_label));
    let mut header = vec!["Benchmark".to_string()];
    for r in input.readers {
        for c in &conditions {
            let col = match c {
                Condition::Gold => "Gold".to_string(),
                Condition::Paraphrased(p) => p.clone(),
            };
            header.push(format!("Reader: {r} / {col}"));
        }
    }
    if gap.is_some() {
        header.push("Average gap between gold and paraphrased".to_string());
    }
    md.push_str(&format!("| {} |\n", header.join(" | ")));
    md.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    if !empty {
        let mut row = vec![format!("{} {}", b.display_name(), metric_label)];
        for r in input.readers {
            let gold = table.get(b, r, &Condition::Gold);
            for c in &conditions {
                row.push(match (table.get(b, r, c), c, gold) {
                    (None, _, _) => "MISSING".to_string(),
                    (Some(v), Condition::Paraphrased(_), Some(g)) => format!("{}{v:.1}", marker(v - g)),
                    (Some(v), _, _) => format!("{v:.1}"),
                });
            }
        }
        if let Some(g) = gap {
            row.push(format!("{}{:.3}", marker(g), g.abs()));
        }
        md.push_str(&format!("| {} |\n", row.join(" | ")));
    } else {
        warnings.push("no predictions".to_string());
    }
    md.push_str(
        "\nParaphrased cells carry `+` for an increase over the same reader's gold score, \
         `-` for a decrease and `=` for no change.\n",
    );

    // accordance.csv
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ACCORDANCE_CSV_HEADER).expect("in-memory write");
    let per_reader: HashMap<&str, Vec<Prediction>> = input
        .readers
        .iter()
        .map(|r| {
            (r.as_str(), input.predictions.iter().filter(|p| &p.reader == r).cloned().collect())
        })
        .collect();
    if !empty {
        for c in &conditions {
            for (i, ra) in input.readers.iter().enumerate() {
                for rb in &input.readers[i + 1..] {
                    match accordance(&per_reader[ra.as_str()], &per_reader[rb.as_str()], c) {
                        Ok(t) => {
                            let pct = t.percentages();
                            w.write_record([
                                c.to_string(),
                                ra.clone(),
                                rb.clone(),
                                t.both_correct.to_string(),
                                t.both_wrong.to_string(),
                                t.only_first.to_string(),
                                t.only_second.to_string(),
                                t.total().to_string(),
                                format!("{:.4}", pct[0]),
                                format!("{:.4}", pct[1]),
                                format!("{:.4}", pct[2]),
                                format!("{:.4}", pct[3]),
                            ])
                            .expect("in-memory write");
                        }
                        Err(e) => {
                            warnings.push(format!("accordance {ra}/{rb} under {c}: {e}"));
                            let mut rec = vec![c.to_string(), ra.clone(), rb.clone()];
                            rec.extend(std::iter::repeat_n("MISSING".to_string(), 9));
                            w.write_record(&rec).expect("in-memory write");
                        }
                    }
                }
            }
        }
    }
    let accordance_csv = csv_string(w);

    // flips.jsonl
    let by_id: HashMap<&str, &QAInstance> = input.instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let order: HashMap<&str, usize> =
        input.instances.iter().enumerate().map(|(n, i)| (i.id.as_str(), n)).collect();
    let mut flips_jsonl = String::new();
    for r in input.readers {
        let mut gold: Vec<Prediction> = per_reader[r.as_str()]
            .iter()
            .filter(|p| p.condition == Condition::Gold)
            .cloned()
            .collect();
        gold.sort_by_key(|p| order.get(p.instance_id.as_str()).copied().unwrap_or(usize::MAX));
        for para in input.paraphrasers {
            let cond = Condition::Paraphrased(para.clone());
            let paraph: Vec<Prediction> =
                per_reader[r.as_str()].iter().filter(|p| p.condition == cond).cloned().collect();
            if gold.is_empty() && paraph.is_empty() {
                continue;
            }
            let flips = match list_flips(&gold, &paraph) {
                Ok(f) => f,
                Err(e) => {
                    warnings.push(format!("flips {r} under {cond}: {e}"));
                    continue;
                }
            };
            let texts = input.paraphrases.get(para);
            for f in flips {
                let inst = by_id[f.instance_id.as_str()];
                let rec = FlipRecord {
                    reader: r,
                    paraphraser: para,
                    transition: f.transition,
                    instance_id: &f.instance_id,
                    question: &inst.question,
                    gold_context: build_context(inst),
                    paraph_context: texts
                        .and_then(|t| t.get(&f.instance_id))
                        .map(String::as_str)
                        .unwrap_or(""),
                    gold_output: &f.gold_output,
                    paraph_output: &f.paraph_output,
                };
                flips_jsonl.push_str(&serde_json::to_string(&rec).expect("flip serializes"));
                flips_jsonl.push('\n');
            }
        }
    }

    if !warnings.is_empty() {
        md.push_str("\nNotes:\n\n");
        for note in &warnings {
            md.push_str(&format!("- {note}\n"));
        }
    }

    Ok(ReportFiles { results_csv, table_md: md, accordance_csv, flips_jsonl, warnings })
}
