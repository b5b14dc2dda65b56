//! `manifest.json`: what produced an output directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub git_describe: String,
    pub timestamp_unix: u64,
    /// File name to SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            git_describe: env!("SDEGAN_GIT_DESCRIBE").to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            artifacts: BTreeMap::new(),
        }
    }

    /// Records `name` (relative to `dir`) with its checksum.
    pub fn add(&mut self, dir: &Path, name: &str) -> CliResult<()> {
        self.artifacts.insert(name.to_string(), file_sha256(&dir.join(name))?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::error::CliError::Runtime(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}
