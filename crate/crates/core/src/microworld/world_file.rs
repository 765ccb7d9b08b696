//! Declarative world definitions (TOML).
//!
//! ```toml
//! vocab = ["a", "b", "c"]
//! max_len = 3
//! queries = ["ab"]
//! answers = ["a", "b", "c"]
//! k = [1, 2]
//! answer_star = { ab = "c" }
//!
//! [corpus]
//! coverage = 0.25          # or: members = ["", "a", "ab"]
//! order = "enumeration"    # or "shuffled" with `seed = 7`
//!
//! [relevance]
//! kind = "softmax_overlap"
//! temperature = 0.5
//!
//! [reader]
//! kind = "explicit"
//! [reader.table."*".cc]    # "*" applies to queries without their own entry
//! c = 1.0
//!
//! [generator]
//! kind = "uniform"         # over = "corpus" restricts the support
//! ```

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    decomposition_record, ErrorDecomposition, Microworld, Result, StringSpace, SweepRow,
    WorldError, WorldParts, SWEEP_CSV_HEADER,
};

const ANY_QUERY: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub vocab: Vec<String>,
    pub max_len: usize,
    pub queries: Vec<String>,
    pub answers: Vec<String>,
    /// Designated correct answer per query; required by simulate and sweep.
    #[serde(default)]
    pub answer_star: BTreeMap<String, String>,
    /// Retrieval depths reported by simulate.
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    pub corpus: CorpusSpec,
    pub relevance: ContextDist,
    pub reader: ReaderDist,
    #[serde(default)]
    pub generator: ContextDist,
}

fn default_k() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<String>>,
    /// Fraction of all strings, rounded to the nearest count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(default)]
    pub order: CorpusOrder,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusOrder {
    /// Take the first strings in enumeration order.
    #[default]
    Enumeration,
    /// Take the first strings of a seeded shuffle.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformOver {
    #[default]
    Strings,
    Corpus,
}

/// A distribution over contexts given a query (relevance or generator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextDist {
    Uniform {
        #[serde(default)]
        over: UniformOver,
    },
    /// All mass on one string per query.
    OneHot { target: BTreeMap<String, String> },
    /// `∝ exp(overlap(q, c) / temperature)`, overlap being the multiset
    /// intersection size of the two token sequences.
    SoftmaxOverlap { temperature: f64 },
    /// Unlisted strings get zero.
    Explicit { table: BTreeMap<String, BTreeMap<String, f64>> },
}

impl Default for ContextDist {
    fn default() -> Self {
        ContextDist::Uniform { over: UniformOver::Strings }
    }
}

/// A distribution over answers given a query and a context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReaderDist {
    Uniform,
    /// `∝ exp(overlap(a, c) / temperature)`.
    SoftmaxOverlap { temperature: f64 },
    /// query → context → answer → probability; unlisted contexts are uniform.
    Explicit { table: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> },
}

/// One line of `simulate` output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRow {
    pub coverage: f64,
    pub decomposition: ErrorDecomposition,
    pub generator_reach: f64,
}

fn overlap(a: &[usize], b: &[usize]) -> usize {
    let mut b = b.to_vec();
    let mut shared = 0;
    for t in a {
        if let Some(pos) = b.iter().position(|x| x == t) {
            b.swap_remove(pos);
            shared += 1;
        }
    }
    shared
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(WorldError::Parse(format!("temperature must be positive, got {t}")))
    }
}

fn lookup(space: &StringSpace, s: &str) -> Result<usize> {
    space.lookup(s).ok_or_else(|| WorldError::UnknownString(s.to_string()))
}

fn per_query<'a, T>(table: &'a BTreeMap<String, T>, query: &str) -> Option<&'a T> {
    table.get(query).or_else(|| table.get(ANY_QUERY))
}

impl WorldSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("world spec serializes")
    }

    pub fn build(&self) -> Result<Microworld> {
        let space = StringSpace::new(self.vocab.clone(), self.max_len)?;
        let n = space.len();
        let answers = self
            .answers
            .iter()
            .map(|a| lookup(&space, a))
            .collect::<Result<Vec<_>>>()?;
        let corpus = self.corpus_members(&space)?;
        let mut corpus_sorted = corpus.clone();
        corpus_sorted.sort_unstable();

        let mut query_tokens = Vec::with_capacity(self.queries.len());
        for q in &self.queries {
            query_tokens.push(space.parse(q));
        }

        let context_row = |dist: &ContextDist, qi: usize, what: &str| -> Result<Vec<f64>> {
            let q = &self.queries[qi];
            match dist {
                ContextDist::Uniform { over: UniformOver::Strings } => Ok(vec![1.0 / n as f64; n]),
                ContextDist::Uniform { over: UniformOver::Corpus } => {
                    if corpus_sorted.is_empty() {
                        return Err(WorldError::Parse(format!("{what}: uniform over empty corpus")));
                    }
                    let mut row = vec![0.0; n];
                    for &c in &corpus_sorted {
                        row[c] = 1.0 / corpus_sorted.len() as f64;
                    }
                    Ok(row)
                }
                ContextDist::OneHot { target } => {
                    let t = per_query(target, q).ok_or_else(|| {
                        WorldError::Parse(format!("{what}: no one-hot target for `{q}`"))
                    })?;
                    let mut row = vec![0.0; n];
                    row[lookup(&space, t)?] = 1.0;
                    Ok(row)
                }
                ContextDist::SoftmaxOverlap { temperature } => {
                    check_temperature(*temperature)?;
                    let qt = query_tokens[qi].as_ref().ok_or_else(|| {
                        WorldError::Parse(format!(
                            "{what}: query `{q}` is not text over the vocabulary"
                        ))
                    })?;
                    let scores: Vec<f64> = (0..n)
                        .map(|c| overlap(qt, space.tokens(c)) as f64 / temperature)
                        .collect();
                    Ok(softmax(&scores))
                }
                ContextDist::Explicit { table } => {
                    let entries = per_query(table, q).ok_or_else(|| {
                        WorldError::Parse(format!("{what}: no table row for `{q}`"))
                    })?;
                    let mut row = vec![0.0; n];
                    for (c, &p) in entries {
                        row[lookup(&space, c)?] = p;
                    }
                    Ok(row)
                }
            }
        };

        let na = answers.len();
        let mut relevance = Vec::new();
        let mut generator = Vec::new();
        let mut reader = Vec::new();
        for (qi, q) in self.queries.iter().enumerate() {
            relevance.push(context_row(&self.relevance, qi, "relevance")?);
            generator.push(context_row(&self.generator, qi, "generator")?);

            let uniform = vec![1.0 / na as f64; na];
            let rows = match &self.reader {
                ReaderDist::Uniform => vec![uniform; n],
                ReaderDist::SoftmaxOverlap { temperature } => {
                    check_temperature(*temperature)?;
                    (0..n)
                        .map(|c| {
                            let scores: Vec<f64> = answers
                                .iter()
                                .map(|&a| {
                                    overlap(space.tokens(a), space.tokens(c)) as f64 / temperature
                                })
                                .collect();
                            softmax(&scores)
                        })
                        .collect()
                }
                ReaderDist::Explicit { table } => {
                    let mut rows = vec![uniform; n];
                    if let Some(contexts) = per_query(table, q) {
                        for (c, dist) in contexts {
                            let ci = lookup(&space, c)?;
                            let mut row = vec![0.0; na];
                            for (a, &p) in dist {
                                let ai = self
                                    .answers
                                    .iter()
                                    .position(|x| x == a)
                                    .ok_or_else(|| WorldError::UnknownAnswer(a.clone()))?;
                                row[ai] = p;
                            }
                            rows[ci] = row;
                        }
                    }
                    rows
                }
            };
            reader.push(rows);
        }

        Microworld::from_parts(WorldParts {
            space,
            queries: self.queries.clone(),
            answers,
            corpus,
            relevance,
            reader,
            generator,
        })
    }

    fn corpus_members(&self, space: &StringSpace) -> Result<Vec<usize>> {
        match (&self.corpus.members, self.corpus.coverage) {
            (Some(members), None) => members.iter().map(|m| lookup(space, m)).collect(),
            (None, Some(coverage)) => {
                if !(0.0..=1.0).contains(&coverage) {
                    return Err(WorldError::Parse(format!("coverage {coverage} outside [0, 1]")));
                }
                let count = (coverage * space.len() as f64).round() as usize;
                let mut order: Vec<usize> = (0..space.len()).collect();
                if self.corpus.order == CorpusOrder::Shuffled {
                    order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.corpus.seed));
                }
                order.truncate(count);
                Ok(order)
            }
            _ => Err(WorldError::Parse(
                "corpus needs exactly one of `members` or `coverage`".into(),
            )),
        }
    }

    fn answer_star_for(&self, query: &str) -> Result<&str> {
        self.answer_star
            .get(query)
            .map(String::as_str)
            .ok_or_else(|| WorldError::Parse(format!("no answer_star for query `{query}`")))
    }

    /// Decomposes every query at every configured `k`.
    pub fn simulate(&self) -> Result<Vec<SimulationRow>> {
        let world = self.build()?;
        let mut rows = Vec::new();
        for q in world.queries() {
            let star = self.answer_star_for(q)?;
            let reach = world.generator_reach(q)?;
            for &k in &self.k {
                rows.push(SimulationRow {
                    coverage: world.coverage(),
                    decomposition: world.decompose(q, star, k)?,
                    generator_reach: reach,
                });
            }
        }
        Ok(rows)
    }

    /// Sweeps every query, concatenated in query order.
    pub fn sweep(&self) -> Result<Vec<SweepRow>> {
        let world = self.build()?;
        let mut rows = Vec::new();
        for q in world.queries() {
            rows.extend(world.sweep(q, self.answer_star_for(q)?)?);
        }
        Ok(rows)
    }
}

/// Sweep header plus a trailing `generator_reach` column.
pub fn simulation_csv(rows: &[SimulationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = SWEEP_CSV_HEADER.to_vec();
    header.push("generator_reach");
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        let mut rec = decomposition_record(row.coverage, &row.decomposition);
        rec.push(row.generator_reach.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}
