//! Knowledge corpus error tooling.
//!
//! * [`microworld`]: exact marginal answer mass over an enumerable string
//!   space, split into knowledge corpus error and retrieval error.
//! * [`datasets`]: NQ (KILT), HotPotQA, StrategyQA and QASC ingestion into one
//!   record shape, with gold-context construction.
//! * [`prompts`]: paraphrase and read prompt templates.
//! * [`evaluation`]: answer normalization, extraction and scoring.
//! * [`analysis`]: result grids, average gold-vs-paraphrase gap, reader
//!   accordance and per-instance flip listings.

pub mod microworld;
pub mod datasets;
pub mod prompts;
pub mod evaluation;
pub mod analysis;
