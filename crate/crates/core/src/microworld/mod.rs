//! Finite stand-in for the open string space a reader marginalizes over.
//!
//! A [`Microworld`] enumerates every token sequence up to a length bound,
//! marks a subset of those sequences as the knowledge corpus, and carries
//! three conditional tables: context relevance `p(c|q)`, the reader
//! `p(a|q,c)`, and a generator `p_gen(c|q)` whose support may leave the
//! corpus. Everything is small enough to sum exactly, so the loss from
//! restricting the marginal to the corpus (knowledge corpus error) and the
//! further loss from keeping only the top-k corpus contexts (retrieval error)
//! are plain numbers rather than estimates.
//!
//! All sums run over ascending enumeration index. Restricted sums are never
//! renormalized; renormalization is only used to pick argmax answers.

mod space;
mod world_file;

use serde::Serialize;
use thiserror::Error;

pub use space::{enumerate_strings, StringSpace, MAX_STRINGS};
pub use world_file::{
    simulation_csv, ContextDist, CorpusOrder, CorpusSpec, ReaderDist, SimulationRow, UniformOver,
    WorldSpec,
};

/// Tolerance for table normalization checks.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("unknown query `{0}`")]
    UnknownQuery(String),
    #[error("`{0}` is not an answer of this world")]
    UnknownAnswer(String),
    #[error("`{0}` is not a string of this world")]
    UnknownString(String),
    #[error("context index {index} outside the {len} enumerated strings")]
    ContextOutOfRange { index: usize, len: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("world file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, WorldError>;

/// Raw tables for [`Microworld::from_parts`]. Tables are dense and indexed by
/// query position, then enumeration index, then answer position.
#[derive(Debug, Clone)]
pub struct WorldParts {
    pub space: StringSpace,
    pub queries: Vec<String>,
    /// Enumeration indices of the candidate answers, in answer order.
    pub answers: Vec<usize>,
    /// Enumeration indices of corpus members (any order, duplicates rejected).
    pub corpus: Vec<usize>,
    pub relevance: Vec<Vec<f64>>,
    pub reader: Vec<Vec<Vec<f64>>>,
    pub generator: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Microworld {
    space: StringSpace,
    queries: Vec<String>,
    answers: Vec<usize>,
    corpus: Vec<usize>,
    in_corpus: Vec<bool>,
    relevance: Vec<Vec<f64>>,
    reader: Vec<Vec<Vec<f64>>>,
    generator: Vec<Vec<f64>>,
}

/// Masses of one designated answer under the three nested supports, and the
/// two error terms they induce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDecomposition {
    pub query: String,
    pub answer_star: String,
    pub k: usize,
    /// Sum over every enumerated string.
    pub full_mass: f64,
    /// Sum over the corpus.
    pub corpus_mass: f64,
    /// Sum over the top-k corpus contexts.
    pub topk_mass: f64,
    /// `full_mass - corpus_mass`.
    pub kce: f64,
    /// `corpus_mass - topk_mass`.
    pub retrieval_error: f64,
    pub argmax_full: Option<String>,
    pub argmax_corpus: Option<String>,
    pub argmax_topk: Option<String>,
}

/// One cell of a coverage-by-k sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Corpus size over the number of enumerated strings.
    pub coverage: f64,
    pub corpus_size: usize,
    pub decomposition: ErrorDecomposition,
}

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "query",
    "coverage",
    "k",
    "full_mass",
    "corpus_mass",
    "topk_mass",
    "kce",
    "retrieval_error",
    "argmax_full",
    "argmax_corpus",
    "argmax_topk",
];

/// Printed in place of an argmax whose support carries zero mass.
pub const UNDEFINED_ARGMAX: &str = "undefined";

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    let mut total = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(WorldError::Invalid(format!("{what} has entry {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(WorldError::Invalid(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl Microworld {
    pub fn from_parts(parts: WorldParts) -> Result<Self> {
        let WorldParts { space, queries, answers, corpus, relevance, reader, generator } = parts;
        let n = space.len();

        if queries.is_empty() {
            return Err(WorldError::Invalid("no queries".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for q in &queries {
            if !seen.insert(q.as_str()) {
                return Err(WorldError::Invalid(format!("duplicate query `{q}`")));
            }
        }
        if answers.is_empty() {
            return Err(WorldError::Invalid("no answers".into()));
        }
        let mut is_answer = vec![false; n];
        for &a in &answers {
            if a >= n {
                return Err(WorldError::ContextOutOfRange { index: a, len: n });
            }
            if std::mem::replace(&mut is_answer[a], true) {
                return Err(WorldError::Invalid(format!("duplicate answer `{}`", space.label(a))));
            }
        }

        let mut in_corpus = vec![false; n];
        for &c in &corpus {
            if c >= n {
                return Err(WorldError::ContextOutOfRange { index: c, len: n });
            }
            if std::mem::replace(&mut in_corpus[c], true) {
                return Err(WorldError::Invalid(format!(
                    "corpus lists `{}` twice",
                    space.label(c)
                )));
            }
        }
        let corpus: Vec<usize> = (0..n).filter(|&i| in_corpus[i]).collect();

        let nq = queries.len();
        let na = answers.len();
        if relevance.len() != nq || generator.len() != nq || reader.len() != nq {
            return Err(WorldError::Invalid("table row count differs from query count".into()));
        }
        for (qi, q) in queries.iter().enumerate() {
            if relevance[qi].len() != n {
                return Err(WorldError::Invalid(format!("relevance row for `{q}` has wrong width")));
            }
            check_distribution(&relevance[qi], &format!("relevance(.|{q})"))?;
            if generator[qi].len() != n {
                return Err(WorldError::Invalid(format!("generator row for `{q}` has wrong width")));
            }
            check_distribution(&generator[qi], &format!("generator(.|{q})"))?;
            if reader[qi].len() != n {
                return Err(WorldError::Invalid(format!("reader table for `{q}` has wrong width")));
            }
            for (c, row) in reader[qi].iter().enumerate() {
                if row.len() != na {
                    return Err(WorldError::Invalid(format!(
                        "reader row for `{q}`, `{}` has {} entries, expected {na}",
                        space.label(c),
                        row.len()
                    )));
                }
                check_distribution(row, &format!("reader(.|{q},{})", space.label(c)))?;
            }
        }

        Ok(Self { space, queries, answers, corpus, in_corpus, relevance, reader, generator })
    }

    pub fn space(&self) -> &StringSpace {
        &self.space
    }

    pub fn strings(&self) -> &[String] {
        self.space.labels()
    }

    pub fn queries(&self) -> &[String] {
        &self.queries
    }

    /// Enumeration indices of the answers, in answer order.
    pub fn answer_indices(&self) -> &[usize] {
        &self.answers
    }

    pub fn answer_labels(&self) -> Vec<&str> {
        self.answers.iter().map(|&a| self.space.label(a)).collect()
    }

    /// Corpus members in ascending enumeration order.
    pub fn corpus(&self) -> &[usize] {
        &self.corpus
    }

    pub fn in_corpus(&self, context: usize) -> bool {
        self.in_corpus.get(context).copied().unwrap_or(false)
    }

    pub fn coverage(&self) -> f64 {
        self.corpus.len() as f64 / self.space.len() as f64
    }

    pub fn relevance(&self, query: usize, context: usize) -> f64 {
        self.relevance[query][context]
    }

    pub fn reader(&self, query: usize, context: usize, answer: usize) -> f64 {
        self.reader[query][context][answer]
    }

    pub fn generator(&self, query: usize, context: usize) -> f64 {
        self.generator[query][context]
    }

    pub fn query_index(&self, query: &str) -> Result<usize> {
        self.queries
            .iter()
            .position(|q| q == query)
            .ok_or_else(|| WorldError::UnknownQuery(query.to_string()))
    }

    pub fn answer_position(&self, answer: &str) -> Result<usize> {
        self.answers
            .iter()
            .position(|&a| self.space.label(a) == answer)
            .ok_or_else(|| WorldError::UnknownAnswer(answer.to_string()))
    }

    /// Same world with a different corpus.
    pub fn with_corpus(&self, corpus: &[usize]) -> Result<Self> {
        Self::from_parts(WorldParts {
            space: self.space.clone(),
            queries: self.queries.clone(),
            answers: self.answers.clone(),
            corpus: corpus.to_vec(),
            relevance: self.relevance.clone(),
            reader: self.reader.clone(),
            generator: self.generator.clone(),
        })
    }

    /// The `k` corpus contexts most relevant to `query`, most relevant first.
    /// Ties keep enumeration order.
    pub fn topk(&self, query: &str, k: usize) -> Result<Vec<usize>> {
        let qi = self.query_index(query)?;
        if k == 0 {
            return Err(WorldError::ZeroK);
        }
        Ok(self.rank(qi, &self.corpus, k))
    }

    fn rank(&self, qi: usize, corpus: &[usize], k: usize) -> Vec<usize> {
        let rel = &self.relevance[qi];
        let mut ranked = corpus.to_vec();
        // stable sort: equal scores stay in ascending enumeration order
        ranked.sort_by(|&a, &b| rel[b].total_cmp(&rel[a]));
        ranked.truncate(k);
        ranked
    }

    /// `Σ_{c ∈ support} p(a|q,c) p(c|q)` for every answer, aligned with
    /// [`Microworld::answer_indices`]. Duplicate support entries count once.
    pub fn answer_mass(&self, query: &str, support: &[usize]) -> Result<Vec<f64>> {
        let qi = self.query_index(query)?;
        let n = self.space.len();
        if let Some(&bad) = support.iter().find(|&&c| c >= n) {
            return Err(WorldError::ContextOutOfRange { index: bad, len: n });
        }
        let mut sorted = support.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        Ok(self.mass_sorted(qi, &sorted))
    }

    /// [`Microworld::answer_mass`] with the support given as string labels.
    pub fn answer_mass_of(&self, query: &str, support: &[&str]) -> Result<Vec<f64>> {
        let indices = support
            .iter()
            .map(|s| self.space.lookup(s).ok_or_else(|| WorldError::UnknownString(s.to_string())))
            .collect::<Result<Vec<_>>>()?;
        self.answer_mass(query, &indices)
    }

    fn mass_sorted(&self, qi: usize, sorted_support: &[usize]) -> Vec<f64> {
        let mut mass = vec![0.0; self.answers.len()];
        for &c in sorted_support {
            let prior = self.relevance[qi][c];
            for (m, &p) in mass.iter_mut().zip(&self.reader[qi][c]) {
                *m += p * prior;
            }
        }
        mass
    }

    fn argmax(&self, mass: &[f64]) -> Option<String> {
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut best = 0;
        let mut best_p = mass[0] / total;
        for (i, &m) in mass.iter().enumerate().skip(1) {
            let p = m / total;
            if p > best_p {
                best = i;
                best_p = p;
            }
        }
        Some(self.space.label(self.answers[best]).to_string())
    }

    pub fn decompose(&self, query: &str, answer_star: &str, k: usize) -> Result<ErrorDecomposition> {
        let qi = self.query_index(query)?;
        let star = self.answer_position(answer_star)?;
        if k == 0 {
            return Err(WorldError::ZeroK);
        }
        Ok(self.decompose_with(qi, star, &self.corpus, k))
    }

    /// `corpus` must be ascending. `k == 0` is allowed here so that sweeps can
    /// describe an empty corpus.
    fn decompose_with(&self, qi: usize, star: usize, corpus: &[usize], k: usize) -> ErrorDecomposition {
        let all: Vec<usize> = (0..self.space.len()).collect();
        let full = self.mass_sorted(qi, &all);
        let in_corpus = self.mass_sorted(qi, corpus);
        let mut top = self.rank(qi, corpus, k);
        top.sort_unstable();
        let in_top = self.mass_sorted(qi, &top);

        let full_mass = full[star];
        let corpus_mass = in_corpus[star];
        let topk_mass = in_top[star];
        ErrorDecomposition {
            query: self.queries[qi].clone(),
            answer_star: self.space.label(self.answers[star]).to_string(),
            k,
            full_mass,
            corpus_mass,
            topk_mass,
            kce: full_mass - corpus_mass,
            retrieval_error: corpus_mass - topk_mass,
            argmax_full: self.argmax(&full),
            argmax_corpus: self.argmax(&in_corpus),
            argmax_topk: self.argmax(&in_top),
        }
    }

    /// Grows the corpus one string at a time, in enumeration order, from the
    /// world's own corpus up to every string, and decomposes at every
    /// `k = 1..=|corpus|` for each corpus along the way. An empty starting
    /// corpus contributes a single `k = 0` row.
    pub fn sweep(&self, query: &str, answer_star: &str) -> Result<Vec<SweepRow>> {
        let qi = self.query_index(query)?;
        let star = self.answer_position(answer_star)?;
        let n = self.space.len();

        let mut member = self.in_corpus.clone();
        let mut corpus = self.corpus.clone();
        let mut rows = Vec::new();
        let mut next = 0;
        loop {
            let coverage = corpus.len() as f64 / n as f64;
            let ks = if corpus.is_empty() { 0..=0 } else { 1..=corpus.len() };
            for k in ks {
                rows.push(SweepRow {
                    coverage,
                    corpus_size: corpus.len(),
                    decomposition: self.decompose_with(qi, star, &corpus, k),
                });
            }
            while next < n && member[next] {
                next += 1;
            }
            if next == n {
                break;
            }
            member[next] = true;
            corpus = (0..n).filter(|&i| member[i]).collect();
        }
        Ok(rows)
    }

    /// Generator probability mass that falls outside the corpus.
    pub fn generator_reach(&self, query: &str) -> Result<f64> {
        let qi = self.query_index(query)?;
        Ok(self.generator[qi]
            .iter()
            .enumerate()
            .filter(|(c, _)| !self.in_corpus[*c])
            .map(|(_, &p)| p)
            .sum())
    }
}

fn argmax_cell(a: &Option<String>) -> &str {
    a.as_deref().unwrap_or(UNDEFINED_ARGMAX)
}

pub(crate) fn decomposition_record(coverage: f64, d: &ErrorDecomposition) -> Vec<String> {
    vec![
        d.query.clone(),
        coverage.to_string(),
        d.k.to_string(),
        d.full_mass.to_string(),
        d.corpus_mass.to_string(),
        d.topk_mass.to_string(),
        d.kce.to_string(),
        d.retrieval_error.to_string(),
        argmax_cell(&d.argmax_full).to_string(),
        argmax_cell(&d.argmax_corpus).to_string(),
        argmax_cell(&d.argmax_topk).to_string(),
    ]
}

/// Renders sweep rows as CSV under [`SWEEP_CSV_HEADER`].
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(decomposition_record(row.coverage, &row.decomposition))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}
