//! Reproducible pipeline plumbing: on-disk layout, checkpoints, manifests, the
//! worker pool, and the train / assay / replicate / inspect pipelines.
//!
//! Layout under an output root:
//!
//! ```text
//! runs/<cohort>/manifest.json
//! runs/<cohort>/seed-<n>/checkpoint.json
//! runs/<cohort>/seed-<n>/log.csv
//! report/{manifest.json, report.csv, summary.json, trajectories.csv, criteria.txt, *.svg}
//! ```

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::ConfigError;
use crate::trainer::{Cohort, TrainError};

pub mod checkpoint;
pub mod criteria;
pub mod manifest;
pub mod pipeline;
pub mod pool;
pub mod svg;

pub use checkpoint::Checkpoint;
pub use manifest::{RunEntry, RunManifest, RunStatus};
pub use pipeline::{assay, inspect, replicate, train_cohort, AssayOutput, ReplicateOutput};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("missing cohort `{0}`: no manifest under the runs directory")]
    MissingCohort(Cohort),
    #[error("{cohort}/seed {seed}: {source}")]
    Train {
        cohort: Cohort,
        seed: u64,
        #[source]
        source: TrainError,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("acceptance failed: {0}")]
    CriteriaFailed(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 for bad input, 3 for a non-finite abort, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Usage(_) | HarnessError::MissingCohort(_) => 2,
            HarnessError::Train {
                source: TrainError::NonFinite { .. },
                ..
            } => 3,
            _ => 1,
        }
    }
}

/// Paths under an output root.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn cohort_dir(&self, c: Cohort) -> PathBuf {
        self.root.join("runs").join(c.name())
    }

    pub fn manifest(&self, c: Cohort) -> PathBuf {
        self.cohort_dir(c).join("manifest.json")
    }

    pub fn run_dir(&self, c: Cohort, seed: u64) -> PathBuf {
        self.cohort_dir(c).join(format!("seed-{seed}"))
    }

    pub fn checkpoint(&self, c: Cohort, seed: u64) -> PathBuf {
        self.run_dir(c, seed).join("checkpoint.json")
    }

    pub fn log(&self, c: Cohort, seed: u64) -> PathBuf {
        self.run_dir(c, seed).join("log.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    /// `path` relative to the root, with forward slashes.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }
}

/// First line of every text artifact.
pub fn hash_header(comment: &str, config_hash: &str) -> String {
    format!("{comment} config_hash: {config_hash}\n")
}
