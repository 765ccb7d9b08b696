//! The `kce` command line.
//!
//! Every subcommand and flag appears in the help output:
//!
//! ```
//! use kce_pipeline::cli::run_cli;
//!
//! let help = |args: &[&str]| {
//!     let (mut out, mut err) = (Vec::new(), Vec::new());
//!     assert_eq!(run_cli(args, &mut out, &mut err), 0);
//!     String::from_utf8(out).unwrap()
//! };
//! let top = help(&["kce", "--help"]);
//! for cmd in ["ingest", "paraphrase", "read", "eval", "report", "simulate", "sweep"] {
//!     assert!(top.contains(cmd));
//! }
//! let report = help(&["kce", "report", "--help"]);
//! for flag in ["--config", "--run-dir", "--limit", "--resume", "--provider", "--offline"] {
//!     assert!(report.contains(flag));
//! }
//! let sweep = help(&["kce", "sweep", "--help"]);
//! assert!(sweep.contains("--world") && sweep.contains("--out"));
//! ```

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kce_core::microworld::{simulation_csv, sweep_csv, WorldSpec};

use crate::config::{Config, Overrides};
use crate::manifest::Stage;
use crate::providers::format_usage;
use crate::run::{run_usage, RunOptions, Runner};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "kce",
    version,
    about = "Paraphrase-vs-gold context experiments and knowledge corpus error microworlds",
    after_help = "Exit codes: 0 success, 1 usage or configuration error, 2 partial completion (resumable), 3 integrity error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration file (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Run directory; overrides `run_dir` from the config.
    #[arg(long, value_name = "DIR")]
    pub run_dir: Option<PathBuf>,
    /// Keep only the first N instances.
    #[arg(long, value_name = "N", allow_negative_numbers = true)]
    pub limit: Option<i64>,
    /// Continue an existing run directory, skipping finished cells.
    #[arg(long)]
    pub resume: bool,
    /// Send every model to this configured provider.
    #[arg(long, value_name = "NAME")]
    pub provider: Option<String>,
    /// Serve from the cache and mock providers only; never call a live API.
    #[arg(long)]
    pub offline: bool,
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// Microworld description (TOML).
    #[arg(long, value_name = "FILE")]
    pub world: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the benchmark into the run directory.
    Ingest(RunArgs),
    /// Ingest, then paraphrase every gold context with each paraphraser.
    Paraphrase(RunArgs),
    /// Run through the reader calls for every reader and condition.
    Read(RunArgs),
    /// Run through scoring: predictions.jsonl and scores.csv.
    Eval(RunArgs),
    /// Run everything and write the report files.
    Report(RunArgs),
    /// Decompose answer mass for every query and k of a microworld.
    Simulate(WorldArgs),
    /// Sweep corpus coverage of a microworld, one row per (size, k).
    Sweep(WorldArgs),
    /// Print token usage recorded in a run directory.
    Usage {
        #[arg(long, value_name = "DIR")]
        run_dir: PathBuf,
    },
}

/// Parses `args` and executes the command, returning the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    match cli.command {
        Command::Ingest(a) => pipeline(&a, Stage::Ingest, out, err),
        Command::Paraphrase(a) => pipeline(&a, Stage::Paraphrase, out, err),
        Command::Read(a) => pipeline(&a, Stage::Read, out, err),
        Command::Eval(a) => pipeline(&a, Stage::Eval, out, err),
        Command::Report(a) => pipeline(&a, Stage::Report, out, err),
        Command::Simulate(w) => world(&w, true, out, err),
        Command::Sweep(w) => world(&w, false, out, err),
        Command::Usage { run_dir } => match run_usage(&run_dir) {
            Ok(r) => {
                let _ = write!(out, "{}", format_usage(&r));
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.exit_code()
            }
        },
    }
}

fn pipeline(a: &RunArgs, through: Stage, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut config = match Config::load(&a.config) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    config.apply(&Overrides {
        limit: a.limit,
        run_dir: a.run_dir.clone(),
        offline: a.offline,
        provider: a.provider.clone(),
    });
    let settings = match config.validate() {
        Ok(s) => s,
        Err(e) => {
            let _ = write!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    let result = Runner::new(settings, None).and_then(|r| r.run(&RunOptions { resume: a.resume, through }));
    match result {
        Ok(summary) => {
            for (stage, m) in &summary.manifest.stages {
                let state = if m.complete { "complete" } else { "incomplete" };
                let _ = writeln!(out, "{}: {}/{} cells, {state}", stage.as_str(), m.cells_done, m.cells_total);
            }
            let cells = summary.manifest.incomplete_cells();
            if !summary.is_complete() {
                for c in &cells {
                    let _ = writeln!(err, "incomplete {c}");
                }
                let _ = writeln!(err, "run is partial; rerun with --resume to finish it");
            }
            summary.exit_code()
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn world(w: &WorldArgs, simulate: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = std::fs::read_to_string(&w.world)
        .map_err(|e| format!("{}: {e}", w.world.display()))
        .and_then(|t| WorldSpec::from_toml(&t).map_err(|e| e.to_string()))
        .and_then(|spec| {
            if simulate {
                spec.simulate().map(|rows| simulation_csv(&rows))
            } else {
                spec.sweep().map(|rows| sweep_csv(&rows))
            }
            .map_err(|e| e.to_string())
        });
    match result {
        Ok(csv) => write_output(w.out.as_deref(), &csv, out, err),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn write_output(path: Option<&Path>, body: &str, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match path {
        None => {
            let _ = write!(out, "{body}");
            EXIT_OK
        }
        Some(p) => match crate::manifest::write_atomic(p, body.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", p.display());
                EXIT_USAGE
            }
        },
    }
}
