//! Run manifests: a JSON record written next to every command's outputs,
//! tying the artifacts to the exact configuration and seed that produced
//! them. Each output file is listed with its SHA-256, so reruns can be
//! checked for bit-identity without keeping the original files around.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hashing::sha256_hex;

/// One output file and its content digest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

/// Provenance record for one command invocation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand name, e.g. `train` or `kar`.
    pub command: String,
    /// Digest of the canonicalized effective configuration.
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    /// Unix timestamps (seconds). Timestamps vary between reruns; the
    /// output digests are what must match.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_digest: config_digest.to_string(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: unix_now(),
            finished_at: None,
            outputs: Vec::new(),
        }
    }

    /// Registers an output file, reading it back to record its digest.
    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.outputs.push(OutputEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Stamps the end time and writes the manifest as pretty JSON.
    pub fn finish_and_save(mut self, path: &Path) -> Result<()> {
        self.finished_at = Some(unix_now());
        let json = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
