//! JSON checkpoints with an integrity digest.
//!
//! The digest is sha256 over the canonical serialization of the run state, so
//! a load re-serializes what it parsed and compares. Floats are written with
//! round-trip precision, so save → load → save is byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, ExperimentConfig};
use crate::trainer::RunState;

use super::HarnessError;

pub const FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config_hash: String,
    /// Config hash salted with cohort and seed; distinct per run.
    pub run_hash: String,
    /// Effective config as TOML.
    pub config: String,
    pub digest: String,
    pub state: RunState,
}

impl Checkpoint {
    pub fn new(cfg: &ExperimentConfig, state: &RunState) -> Result<Self, HarnessError> {
        Ok(Checkpoint {
            format: FORMAT,
            config_hash: cfg.hash(),
            run_hash: cfg.run_hash(state.cohort.name(), state.seed),
            config: cfg.identity().dump(),
            digest: state_digest(state)?,
            state: state.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string(self).map_err(|e| HarnessError::Integrity(format!("serialize checkpoint: {e}")))
    }

    /// Parses and verifies format and digest.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| HarnessError::Integrity(format!("{origin}: unreadable checkpoint: {e}")))?;
        if ck.format != FORMAT {
            return Err(HarnessError::Integrity(format!(
                "{origin}: checkpoint format {} (expected {FORMAT})",
                ck.format
            )));
        }
        let digest = state_digest(&ck.state)?;
        if digest != ck.digest {
            return Err(HarnessError::Integrity(format!(
                "{origin}: digest mismatch (stored {}, computed {digest})",
                ck.digest
            )));
        }
        let cfg = ck.experiment_config(origin)?;
        if cfg.hash() != ck.config_hash {
            return Err(HarnessError::Integrity(format!("{origin}: config hash does not match embedded config")));
        }
        Ok(ck)
    }

    pub fn experiment_config(&self, origin: &str) -> Result<ExperimentConfig, HarnessError> {
        ExperimentConfig::from_toml_str(&self.config, origin)
            .map_err(|e| HarnessError::Integrity(format!("{origin}: embedded config: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

pub fn state_digest(state: &RunState) -> Result<String, HarnessError> {
    let body =
        serde_json::to_string(state).map_err(|e| HarnessError::Integrity(format!("serialize state: {e}")))?;
    Ok(sha256_hex(body.as_bytes()))
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
