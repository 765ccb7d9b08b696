//! Write-once response store: `root/ab/cd/<key>.json`, where `ab` and `cd`
//! are the first two byte pairs of the key.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AttemptRecord, CacheKey, ProviderRequest, Usage};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cache entry {path} is unreadable: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("cache already holds a different response for {key}")]
    Conflict { key: CacheKey },
}

/// A stored response with the full request that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: CacheKey,
    pub request: ProviderRequest,
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub timestamp: u64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attempt_log: Vec<AttemptRecord>,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

impl ResponseCache {
    pub fn open(root: &Path) -> Result<Self, CacheError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(ResponseCache { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let k = key.as_str();
        self.root.join(&k[..2]).join(&k[2..4]).join(format!("{k}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheRecord>, CacheError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let record: CacheRecord = serde_json::from_str(&text)
            .map_err(|e| CacheError::Corrupt { path: path.clone(), message: e.to_string() })?;
        if &record.key != key || record.request.key() != *key {
            return Err(CacheError::Corrupt { path, message: "key does not match request".into() });
        }
        Ok(Some(record))
    }

    /// Stores `record` unless an entry exists. Rewriting the same text is a
    /// no-op; a different text under the same key is a conflict.
    pub fn put(&self, record: &CacheRecord) -> Result<(), CacheError> {
        let path = self.path_for(&record.key);
        let dir = path.parent().expect("fan-out directory");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        let body = serde_json::to_vec_pretty(record).expect("record serializes");
        tmp.write_all(&body).map_err(io_err(&path))?;
        tmp.as_file().sync_all().map_err(io_err(&path))?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => match self.get(&record.key)? {
                Some(existing) if existing.text == record.text => Ok(()),
                _ => Err(CacheError::Conflict { key: record.key.clone() }),
            },
            Err(e) => Err(io_err(&path)(e.error)),
        }
    }
}
