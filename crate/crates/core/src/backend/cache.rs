//! Append-only prediction cache (`cache.jsonl`).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::parse::{parse_prediction, InferenceResult};
use super::BackendError;

/// Cache key: SHA-256 over model id, template version and text body.
pub fn cache_key(model_id: &str, template_version: &str, body: &str) -> String {
    let mut h = Sha256::new();
    for part in [model_id, template_version, body] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

/// One line of `cache.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheLine {
    pub key: String,
    pub model: String,
    pub template_version: String,
    pub party: Option<String>,
    pub confidence: Option<u8>,
    pub raw: String,
    pub ts: DateTime<Utc>,
    /// Sampling temperature used for the request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl CacheLine {
    pub fn from_result(key: String, model: &str, template_version: &str, result: &InferenceResult, temperature: f64) -> Self {
        let (party, confidence, raw) = match result {
            Ok(p) => (Some(p.party.as_str().to_string()), Some(p.confidence), p.raw.clone()),
            Err(m) => (None, None, m.raw.clone()),
        };
        CacheLine {
            key,
            model: model.to_string(),
            template_version: template_version.to_string(),
            party,
            confidence,
            raw,
            ts: Utc::now(),
            temperature: Some(temperature),
        }
    }

    /// Re-derives the result from the stored raw answer.
    pub fn result(&self) -> InferenceResult {
        parse_prediction(&self.raw, &self.model, &self.template_version)
    }
}

/// Thread-safe cache; optionally persisted as append-only JSONL. Identical
/// keys always carry identical values, so concurrent inserts are
/// last-write-wins.
pub struct PredictionCache {
    entries: Mutex<HashMap<String, CacheLine>>,
    sink: Option<(PathBuf, Mutex<File>)>,
}

impl PredictionCache {
    pub fn in_memory() -> Self {
        PredictionCache { entries: Mutex::new(HashMap::new()), sink: None }
    }

    /// Opens (creating if needed) the cache file at `path` and loads it.
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let io = |e: std::io::Error| BackendError::Cache(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine = serde_json::from_str(&line)
                    .map_err(|e| BackendError::Cache(format!("{} line {}: {e}", path.display(), i + 1)))?;
                entries.insert(entry.key.clone(), entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(PredictionCache { entries: Mutex::new(entries), sink: Some((path.to_path_buf(), Mutex::new(file))) })
    }

    pub fn get(&self, key: &str) -> Option<CacheLine> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.lock().expect("cache lock").contains_key(key)
    }

    pub fn insert(&self, line: CacheLine) -> Result<(), BackendError> {
        if let Some((path, file)) = &self.sink {
            let mut encoded = serde_json::to_string(&line).map_err(|e| BackendError::Cache(e.to_string()))?;
            encoded.push('\n');
            file.lock()
                .expect("cache file lock")
                .write_all(encoded.as_bytes())
                .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
        }
        self.entries.lock().expect("cache lock").insert(line.key.clone(), line);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
