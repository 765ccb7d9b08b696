//! The run directory record and per-cell progress logs.
//!
//! Layout under the run directory:
//!
//! ```text
//! manifest.json              snapshot, stage markers, artifact paths
//! instances.jsonl            ingested instances
//! ingest_skipped.jsonl       items the loader dropped
//! progress/paraphrase/<alias>.jsonl
//! progress/read/<reader>/<condition>.jsonl
//! calls.jsonl                one line per provider response
//! predictions.jsonl, scores.csv
//! report/                    results.csv, table.md, accordance.csv, flips.jsonl
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use kce_core::datasets::Benchmark;
use kce_core::evaluation::Condition;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelRef;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Paraphrase,
    Read,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Paraphrase, Stage::Read, Stage::Eval, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Paraphrase => "paraphrase",
            Stage::Read => "read",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }
}

/// Everything that determines the outcome of a run, given the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub benchmark: Benchmark,
    /// SHA-256 of each input file, keyed by role.
    pub data_digests: BTreeMap<String, String>,
    pub limit: Option<usize>,
    pub seed: u64,
    pub shuffle: bool,
    pub paraphrasers: Vec<ModelRef>,
    pub readers: Vec<ModelRef>,
    pub template_checksum: String,
    pub demos_checksum: String,
    /// Recorded but not part of the run identity.
    pub parallelism: usize,
}

impl ConfigSnapshot {
    fn identity(&self) -> ConfigSnapshot {
        ConfigSnapshot { parallelism: 0, ..self.clone() }
    }

    pub fn same_run(&self, other: &ConfigSnapshot) -> bool {
        self.identity() == other.identity()
    }

    pub fn run_id(&self) -> String {
        let json = serde_json::to_vec(&self.identity()).expect("snapshot serializes");
        hex::encode(&Sha256::digest(json)[..6])
    }

    /// Gold first, then one condition per paraphraser.
    pub fn conditions(&self) -> Vec<Condition> {
        std::iter::once(Condition::Gold)
            .chain(self.paraphrasers.iter().map(|p| Condition::Paraphrased(p.alias.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMarker {
    pub complete: bool,
    pub cells_total: usize,
    pub cells_done: usize,
    /// Cells that failed in the latest attempt, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub snapshot: ConfigSnapshot,
    pub stages: BTreeMap<Stage, StageMarker>,
    /// Artifact name to path relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(snapshot: ConfigSnapshot) -> Self {
        RunManifest { run_id: snapshot.run_id(), snapshot, stages: BTreeMap::new(), artifacts: BTreeMap::new() }
    }

    pub fn load(run_dir: &Path) -> io::Result<Option<Self>> {
        let path = run_dir.join(MANIFEST_FILE);
        match fs::read_to_string(&path) {
            Ok(t) => serde_json::from_str(&t)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, run_dir: &Path) -> io::Result<()> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_atomic(&run_dir.join(MANIFEST_FILE), body.as_bytes())
    }

    pub fn is_complete(&self, stage: Stage) -> bool {
        self.stages.get(&stage).is_some_and(|m| m.complete)
    }

    pub fn incomplete_cells(&self) -> Vec<String> {
        self.stages
            .iter()
            .flat_map(|(s, m)| m.failed.iter().map(move |f| format!("{}: {f}", s.as_str())))
            .collect()
    }
}

/// Replaces `path` in one rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// File-name form of a condition.
pub fn condition_slug(c: &Condition) -> String {
    match c {
        Condition::Gold => "gold".to_string(),
        Condition::Paraphrased(p) => format!("paraph-{p}"),
    }
}

/// Append-only JSONL file shared between worker threads. A torn last line
/// (from a killed process) is ignored on read.
pub struct JsonlLog {
    path: PathBuf,
    lock: Mutex<()>,
}

impl JsonlLog {
    pub fn new(path: PathBuf) -> Self {
        JsonlLog { path, lock: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&self, record: &T) -> io::Result<()> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let _g = self.lock.lock().expect("log lock poisoned");
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        f.flush()
    }

    pub fn read<T: DeserializeOwned>(&self) -> io::Result<Vec<T>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut out = Vec::with_capacity(lines.len());
        for (i, l) in lines.iter().enumerate() {
            match serde_json::from_str(l) {
                Ok(r) => out.push(r),
                Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                    log::warn!("{}: ignoring torn last line", self.path.display())
                }
                Err(e) => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", self.path.display(), i + 1),
                    ))
                }
            }
        }
        Ok(out)
    }
}
