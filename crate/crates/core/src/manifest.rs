//! Run manifests: enough to tell whether an artifact is reproducible and
//! whether a command can be skipped on rerun.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: BTreeMap<String, u64>, inputs: &[&Path]) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            outputs: Vec::new(),
        })
    }

    pub fn record_outputs(&mut self, outputs: &[&Path]) -> Result<()> {
        self.outputs = outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&body)?)
    }

    /// True when `existing` was produced by the same command, config, seeds
    /// and inputs, and every recorded output is still on disk unchanged.
    pub fn is_satisfied_by(&self, existing: &RunManifest) -> bool {
        existing.command == self.command
            && existing.config == self.config
            && existing.seeds == self.seeds
            && existing.inputs == self.inputs
            && !existing.outputs.is_empty()
            && existing
                .outputs
                .iter()
                .all(|o| sha256_file(&o.path).map(|h| h == o.sha256).unwrap_or(false))
    }

    /// Loads the manifest at `path` (if any) and checks it against `self`.
    pub fn up_to_date(&self, path: &Path) -> bool {
        RunManifest::load(path).map(|m| self.is_satisfied_by(&m)).unwrap_or(false)
    }
}
