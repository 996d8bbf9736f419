use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::PipelineError;

pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory when inside it.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What one command read and wrote. Contains no timestamps, so two runs
/// with the same inputs and config produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub exit_code: i32,
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stats: BTreeMap<String, Value>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

pub fn digest(out_dir: &Path, path: &Path) -> Result<FileDigest, PipelineError> {
    let (sha256, bytes) = sha256_file(path)?;
    let shown = path.strip_prefix(out_dir).unwrap_or(path);
    Ok(FileDigest { path: shown.to_string_lossy().replace('\\', "/"), sha256, bytes })
}

pub fn manifest_path(out_dir: &Path, command: &str) -> PathBuf {
    out_dir.join(MANIFEST_DIR).join(format!("{command}.json"))
}

impl Manifest {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, PipelineError> {
        let path = manifest_path(out_dir, &self.command);
        let dir = path.parent().expect("manifest path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| PipelineError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
    }

    /// Every manifest in `out_dir`, by command name.
    pub fn read_all(out_dir: &Path) -> Result<BTreeMap<String, Manifest>, PipelineError> {
        let dir = out_dir.join(MANIFEST_DIR);
        let mut out = BTreeMap::new();
        let Ok(entries) = std::fs::read_dir(&dir) else { return Ok(out) };
        for entry in entries {
            let path = entry.map_err(|e| PipelineError::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let m = Manifest::read(&path)?;
                out.insert(m.command.clone(), m);
            }
        }
        Ok(out)
    }
}
