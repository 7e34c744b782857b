use std::path::Path;

use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::trainer::Cohort;

use super::checkpoint::write_atomic;
use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub cohort: Cohort,
    pub seed: u64,
    pub run_hash: String,
    pub episodes: usize,
    pub status: RunStatus,
    /// Paths relative to the output root.
    pub checkpoint: Option<String>,
    pub log: Option<String>,
}

/// What one invocation produced: training runs for a cohort, or a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub code_version: String,
    pub master_seed: u64,
    pub cohorts: Vec<Cohort>,
    pub seeds: Vec<u64>,
    pub started: String,
    pub finished: Option<String>,
    pub runs: Vec<RunEntry>,
    /// Other artifacts (reports, figures), relative to the output root.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(kind: &str, config_hash: &str, master_seed: u64, cohorts: Vec<Cohort>, seeds: Vec<u64>) -> Self {
        RunManifest {
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            cohorts,
            seeds,
            started: now(),
            finished: None,
            runs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished = Some(now());
    }

    pub fn is_complete(&self) -> bool {
        self.runs.iter().all(|r| r.status == RunStatus::Complete)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Integrity(format!("serialize manifest: {e}")))?;
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Integrity(format!("{}: unreadable manifest: {e}", path.display())))
    }
}

fn now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "unknown".into())
}
