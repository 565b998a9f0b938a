use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_error, read_text, write_text, RunConfig};
use crate::error::{DsaError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory for outputs; as given for inputs.
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, label: impl Into<String>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
        Ok(Self {
            path: label.into(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub command: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    /// Fully resolved configuration (defaults and `--seed` applied).
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub(crate) fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: &RunConfig) -> Self {
        Self {
            artifact: crate::ARTIFACT_VERSION.into(),
            command: command.into(),
            args,
            config: config.to_json(),
            seeds: Vec::new(),
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn resolved_config(&self) -> Result<RunConfig> {
        RunConfig::from_json(self.config.clone())
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.finished_unix_ms = unix_ms();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_text(&dir.join(MANIFEST_FILE), &text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| DsaError::Parse(format!("{}: {e}", path.display())))
    }
}
