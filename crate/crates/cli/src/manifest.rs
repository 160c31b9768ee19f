//! Per-run manifest: what was trained, on which bytes, and how long it took.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shgt_core::checkpoint::write_atomic;

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// `v<crate version>-g<commit>` when built inside a git checkout,
/// `v<crate version>-dev` otherwise.
pub fn version_string() -> String {
    format!(
        "v{}-{}",
        env!("CARGO_PKG_VERSION"),
        option_env!("SHGT_BUILD_REV").map_or_else(|| "dev".to_string(), |r| format!("g{r}"))
    )
}

/// Hex SHA-256 of the corpus bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub version: String,
    /// Canonical `key = value` lines of the effective configuration.
    pub config: BTreeMap<String, String>,
    pub corpus_sha256: String,
    pub seed: u64,
    pub split_seed: u64,
    /// Patients per split part.
    pub split_sizes: SplitSizes,
    /// Patients dropped because their last visit had no diagnosis.
    pub skipped_patients: usize,
    pub codes: usize,
    pub visits: usize,
    pub labels: usize,
    pub started_unix: f64,
    /// Wall-clock seconds per phase, filled in as phases finish.
    pub timings: BTreeMap<String, f64>,
    pub epochs_run: Option<usize>,
    pub best_epoch: Option<usize>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest always serializes");
        text.push('\n');
        write_atomic(dir.join(MANIFEST_FILE), text.as_bytes()).map_err(CliError::from)
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
