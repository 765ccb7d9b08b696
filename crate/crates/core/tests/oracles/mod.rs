//! Reference implementations written without reusing library code, plus
//! the published numbers the library must reproduce.
#![allow(dead_code)]

pub mod datasets;
pub mod text;
pub mod world;

use std::collections::BTreeMap;

use kce_core::analysis::ResultsTable;
use kce_core::datasets::Benchmark;
use kce_core::evaluation::{Condition, Prediction};

pub const READERS: [&str; 2] = ["gpt", "claude"];
pub const PARAPHRASERS: [&str; 2] = ["gpt", "claude"];

/// Per benchmark: reader GPT (gold, GPT-paraphrased, Claude-paraphrased),
/// then reader Claude in the same order, then the printed gap.
pub const PRINTED_RESULTS: [(Benchmark, [f64; 6], f64); 4] = [
    (Benchmark::Nq, [40.9, 39.9, 44.3, 18.3, 21.3, 35.5], 3.125),
    (Benchmark::HotpotQa, [36.3, 38.6, 43.4, 47.6, 50.9, 54.2], 4.825),
    (Benchmark::StrategyQa, [54.6, 56.4, 70.5, 68.9, 75.5, 76.5], 7.975),
    (Benchmark::Qasc, [95.7, 92.4, 91.1, 86.3, 75.7, 76.9], -6.975),
];

/// The NQ value the mean of the four printed differences actually gives.
pub const NQ_RECOMPUTED_GAP: f64 = 5.65;

pub fn printed_table() -> ResultsTable {
    let mut t = ResultsTable::new(
        READERS.iter().map(|s| s.to_string()).collect(),
        PARAPHRASERS.iter().map(|s| s.to_string()).collect(),
    );
    for (b, cells, _) in PRINTED_RESULTS {
        for (ri, reader) in READERS.iter().enumerate() {
            t.set(b, reader, Condition::Gold, cells[ri * 3]);
            for (pi, p) in PARAPHRASERS.iter().enumerate() {
                t.set(b, reader, Condition::Paraphrased(p.to_string()), cells[ri * 3 + 1 + pi]);
            }
        }
    }
    t
}

/// Mean of (paraphrased - gold) written out term by term.
pub fn gap_by_hand(cells: [f64; 6]) -> f64 {
    let [g1, p11, p12, g2, p21, p22] = cells;
    ((p11 - g1) + (p12 - g1) + (p21 - g2) + (p22 - g2)) / 4.0
}

/// Counts of (both correct, both wrong, only first, only second) for the
/// HotPotQA gold row of the two-reader agreement table, over 100 instances.
pub const HOTPOTQA_GOLD_ACCORDANCE: [u64; 4] = [27, 43, 9, 21];

pub fn prediction(reader: &str, id: &str, condition: &Condition, correct: bool) -> Prediction {
    Prediction {
        instance_id: id.to_string(),
        condition: condition.clone(),
        reader: reader.to_string(),
        raw_output: String::new(),
        extracted: None,
        correct,
        note: None,
    }
}

/// Two readers' predictions realizing the given cell counts, in id order.
pub fn verdict_sets(counts: [u64; 4], condition: &Condition) -> (Vec<Prediction>, Vec<Prediction>) {
    let pairs = [(true, true), (false, false), (true, false), (false, true)];
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut n = 0;
    for (count, (va, vb)) in counts.iter().zip(pairs) {
        for _ in 0..*count {
            let id = format!("hp-{n:04}");
            a.push(prediction("gpt", &id, condition, va));
            b.push(prediction("claude", &id, condition, vb));
            n += 1;
        }
    }
    (a, b)
}

/// Cell counts computed straight from verdict maps.
pub fn accordance_by_hand(a: &BTreeMap<String, bool>, b: &BTreeMap<String, bool>) -> [u64; 4] {
    let mut cells = [0; 4];
    for (id, &va) in a {
        let vb = b[id];
        let slot = match (va, vb) {
            (true, true) => 0,
            (false, false) => 1,
            (true, false) => 2,
            (false, true) => 3,
        };
        cells[slot] += 1;
    }
    cells
}
