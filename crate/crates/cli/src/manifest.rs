//! Run manifests: a JSON record of one training run and the files it wrote.

use std::path::Path;

use noisytwins::gan::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged,
    Failed,
}

/// Files written by a run, relative to the run directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub config: String,
    pub run_log: Option<String>,
    pub snapshots: Option<String>,
    pub checkpoints: Vec<String>,
    pub metrics: Vec<String>,
}

impl Artifacts {
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.config.as_str())
            .chain(self.run_log.as_deref())
            .chain(self.snapshots.as_deref())
            .chain(self.checkpoints.iter().map(String::as_str))
            .chain(self.metrics.iter().map(String::as_str))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `baseline`, `noise-only`, `twins-only` or `noisytwins`.
    pub tag: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub iterations_completed: u64,
    pub library_version: String,
    pub config: TrainConfig,
    pub artifacts: Artifacts,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Usage(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(&path, e))
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
