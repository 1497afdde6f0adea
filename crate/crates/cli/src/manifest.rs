use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io::write_atomic;

/// Provenance record written next to every command's outputs. The
/// timestamp lives here only, so the data files themselves stay
/// byte-identical across reruns.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub input_paths: Vec<PathBuf>,
    pub output_paths: Vec<PathBuf>,
    pub tool_version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &[u8], seed: u64) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            config_hash: hex::encode(Sha256::digest(config)),
            seed,
            input_paths: Vec::new(),
            output_paths: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn file_name(subcommand: &str) -> String {
        format!("{subcommand}.manifest.json")
    }

    /// Writes `<dir>/<subcommand>.manifest.json` atomically and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.subcommand));
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
