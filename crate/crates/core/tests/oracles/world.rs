//! Random microworlds kept as label-keyed tables, and the decomposition
//! computed by plain loops over those tables.

use std::collections::HashMap;

use kce_core::microworld::{Microworld, StringSpace, WorldParts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RandomWorld {
    pub vocab: Vec<String>,
    pub max_len: usize,
    pub strings: Vec<String>,
    pub queries: Vec<String>,
    pub answers: Vec<String>,
    pub corpus: Vec<String>,
    pub relevance: HashMap<(String, String), f64>,
    /// Keyed by (query, context, answer).
    pub reader: HashMap<(String, String, String), f64>,
    pub generator: HashMap<(String, String), f64>,
}

/// Every concatenation of up to `max_len` tokens, built by extension.
pub fn all_strings(vocab: &[String], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in vocab {
                next.push(format!("{s}{t}"));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

impl RandomWorld {
    /// |vocab| and length both in 1..=3, so at most 40 strings.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab: Vec<String> = ["x", "y", "z"][..rng.random_range(1..=3)].iter().map(|s| s.to_string()).collect();
        let max_len = rng.random_range(1..=3);
        let strings = all_strings(&vocab, max_len);
        let n = strings.len();

        let queries: Vec<String> = (0..rng.random_range(1..=2)).map(|i| format!("q{i}")).collect();
        let wanted = rng.random_range(1..=n.min(3));
        let mut answers = Vec::new();
        while answers.len() < wanted {
            let s = strings[rng.random_range(0..n)].clone();
            if !answers.contains(&s) {
                answers.push(s);
            }
        }
        let density = rng.random_range(0.0..1.0);
        let corpus: Vec<String> = strings.iter().filter(|_| rng.random_bool(density)).cloned().collect();

        let mut relevance = HashMap::new();
        let mut generator = HashMap::new();
        let mut reader = HashMap::new();
        for q in &queries {
            for (s, p) in strings.iter().zip(distribution(&mut rng, n)) {
                relevance.insert((q.clone(), s.clone()), p);
            }
            for (s, p) in strings.iter().zip(distribution(&mut rng, n)) {
                generator.insert((q.clone(), s.clone()), p);
            }
            for s in &strings {
                for (a, p) in answers.iter().zip(distribution(&mut rng, answers.len())) {
                    reader.insert((q.clone(), s.clone(), a.clone()), p);
                }
            }
        }
        RandomWorld { vocab, max_len, strings, queries, answers, corpus, relevance, reader, generator }
    }

    /// Converts the tables into the library's dense index form.
    pub fn build(&self) -> Microworld {
        let space = StringSpace::new(self.vocab.clone(), self.max_len).unwrap();
        let idx = |s: &str| space.lookup(s).unwrap_or_else(|| panic!("`{s}` not enumerated"));
        let n = space.len();
        let mut relevance = vec![vec![0.0; n]; self.queries.len()];
        let mut generator = vec![vec![0.0; n]; self.queries.len()];
        let mut reader = vec![vec![vec![0.0; self.answers.len()]; n]; self.queries.len()];
        for (qi, q) in self.queries.iter().enumerate() {
            for s in &self.strings {
                let c = idx(s);
                relevance[qi][c] = self.relevance[&(q.clone(), s.clone())];
                generator[qi][c] = self.generator[&(q.clone(), s.clone())];
                for (ai, a) in self.answers.iter().enumerate() {
                    reader[qi][c][ai] = self.reader[&(q.clone(), s.clone(), a.clone())];
                }
            }
        }
        Microworld::from_parts(WorldParts {
            queries: self.queries.clone(),
            answers: self.answers.iter().map(|a| idx(a)).collect(),
            corpus: self.corpus.iter().map(|c| idx(c)).collect(),
            relevance,
            reader,
            generator,
            space,
        })
        .unwrap()
    }

    fn mass(&self, q: &str, support: &[String]) -> Vec<f64> {
        let mut mass = vec![0.0; self.answers.len()];
        for c in support {
            let prior = self.relevance[&(q.to_string(), c.clone())];
            for (ai, a) in self.answers.iter().enumerate() {
                mass[ai] += self.reader[&(q.to_string(), c.clone(), a.clone())] * prior;
            }
        }
        mass
    }

    fn argmax(&self, mass: &[f64]) -> Option<String> {
        if mass.iter().sum::<f64>() <= 0.0 {
            return None;
        }
        let mut best = 0;
        for i in 1..mass.len() {
            if mass[i] > mass[best] {
                best = i;
            }
        }
        Some(self.answers[best].clone())
    }

    /// Corpus members ordered by relevance, highest first.
    pub fn topk(&self, q: &str, k: usize) -> Vec<String> {
        let mut ranked = self.corpus.clone();
        ranked.sort_by(|a, b| {
            let ra = self.relevance[&(q.to_string(), a.clone())];
            let rb = self.relevance[&(q.to_string(), b.clone())];
            rb.partial_cmp(&ra).unwrap()
        });
        ranked.truncate(k);
        ranked
    }

    pub fn decompose(&self, q: &str, star: &str, k: usize) -> Expected {
        let ai = self.answers.iter().position(|a| a == star).unwrap();
        let full = self.mass(q, &self.strings);
        let corpus = self.mass(q, &self.corpus);
        let top = self.mass(q, &self.topk(q, k));
        Expected {
            full_mass: full[ai],
            corpus_mass: corpus[ai],
            topk_mass: top[ai],
            kce: full[ai] - corpus[ai],
            retrieval_error: corpus[ai] - top[ai],
            argmax_full: self.argmax(&full),
            argmax_corpus: self.argmax(&corpus),
            argmax_topk: self.argmax(&top),
        }
    }
}

#[derive(Debug)]
pub struct Expected {
    pub full_mass: f64,
    pub corpus_mass: f64,
    pub topk_mass: f64,
    pub kce: f64,
    pub retrieval_error: f64,
    pub argmax_full: Option<String>,
    pub argmax_corpus: Option<String>,
    pub argmax_topk: Option<String>,
}

pub const TOLERANCE: f64 = 1e-12;

/// Compares every field of the library decomposition for every query,
/// answer and k in `1..=|corpus|` (k = 1 for an empty corpus).
pub fn check_world(seed: u64) -> Result<usize, String> {
    let rw = RandomWorld::generate(seed);
    let world = rw.build();
    let labels: Vec<&str> = world.strings().iter().map(String::as_str).collect();
    let mut mine: Vec<&str> = rw.strings.iter().map(String::as_str).collect();
    let mut theirs = labels.clone();
    mine.sort_unstable();
    theirs.sort_unstable();
    if mine != theirs {
        return Err(format!("seed {seed}: enumerated strings differ"));
    }
    let mut checked = 0;
    for q in &rw.queries {
        for star in &rw.answers {
            let mut previous_topk = f64::NEG_INFINITY;
            for k in 1..=rw.corpus.len().max(1) {
                let got = world.decompose(q, star, k).map_err(|e| e.to_string())?;
                let want = rw.decompose(q, star, k);
                let close = |a: f64, b: f64| (a - b).abs() <= TOLERANCE;
                let ok = close(got.full_mass, want.full_mass)
                    && close(got.corpus_mass, want.corpus_mass)
                    && close(got.topk_mass, want.topk_mass)
                    && close(got.kce, want.kce)
                    && close(got.retrieval_error, want.retrieval_error)
                    && got.argmax_full == want.argmax_full
                    && got.argmax_corpus == want.argmax_corpus
                    && got.argmax_topk == want.argmax_topk;
                if !ok {
                    return Err(format!("seed {seed}, {q}, {star}, k={k}: got {got:?}, want {want:?}"));
                }
                if got.topk_mass < previous_topk {
                    return Err(format!("seed {seed}: topk mass fell at k={k}"));
                }
                previous_topk = got.topk_mass;
                if k == rw.corpus.len() && got.retrieval_error != 0.0 {
                    return Err(format!("seed {seed}: retrieval error {} at k = |corpus|", got.retrieval_error));
                }
                checked += 1;
            }
            let everything: Vec<usize> = (0..world.strings().len()).collect();
            let full = world.with_corpus(&everything).map_err(|e| e.to_string())?;
            for k in [1, everything.len()] {
                let d = full.decompose(q, star, k).map_err(|e| e.to_string())?;
                if d.kce != 0.0 {
                    return Err(format!("seed {seed}: kce {} with the full corpus", d.kce));
                }
            }
        }
    }
    Ok(checked)
}
