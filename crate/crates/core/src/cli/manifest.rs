use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CommonArgs;

/// Hex SHA-256 of the raw config bytes.
pub fn config_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Provenance written as `manifest.json` next to every run's outputs.
/// Timestamps live only here so the data files stay diffable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_path: String,
    pub config_digest: String,
    pub seed_override: Option<u64>,
    pub workers: Option<usize>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Manifest {
    pub(super) fn start(command: &str, config_path: &Path, config_text: &str, common: &CommonArgs) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_path: config_path.display().to_string(),
            config_digest: config_digest(config_text),
            seed_override: common.seed,
            workers: common.workers,
            started_at: now(),
            finished_at: None,
            outputs: Vec::new(),
        }
    }

    pub(super) fn finish(&mut self, outputs: &[&str]) {
        self.finished_at = Some(now());
        self.outputs = outputs.iter().map(|s| s.to_string()).collect();
    }
}
