//! Experiment runner for paraphrased-versus-gold context reading.
//!
//! * [`providers`]: cached, retrying, rate-limited text generation clients
//!   and an offline mock.
//! * [`config`]: the run configuration and its validation.
//! * [`manifest`]: run directory bookkeeping and resumable progress logs.
//! * [`run`]: the ingest, paraphrase, read, eval and report stages.
//! * [`cli`]: the `kce` command line.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod providers;
pub mod run;
