//! Experiment configuration: one TOML file with a section per module, plus
//! environment-variable overrides of the form `SOMAGRID__SECTION__KEY=value`
//! (nested tables add more `__` segments).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::AgentConfig;
use crate::assays::AssayConfig;
use crate::environment::EnvConfig;
use crate::trainer::TrainConfig;

pub const ENV_PREFIX: &str = "SOMAGRID__";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// The message from the TOML parser already carries line and column.
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override {var}: {message}")]
    Override { var: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 0,
            seeds: (0..30).collect(),
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub train: TrainConfig,
    pub assay: AssayConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 8 seeds and 120 episodes.
    pub fn desk() -> Self {
        let mut c = ExperimentConfig::default();
        c.run.seeds = (0..8).collect();
        c.train.episodes = 120;
        c
    }

    /// A minutes-free pipeline check: two seeds, ten episodes. Too few seeds
    /// for the statistical criteria, which report SKIPPED.
    pub fn smoke() -> Self {
        let mut c = ExperimentConfig::default();
        c.run.seeds = vec![0, 1];
        c.train.episodes = 10;
        c.train.warmup_episodes = 3;
        c
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_overrides(text, origin, std::iter::empty())
    }

    /// Parses `text`, applies `SOMAGRID__…` overrides from `vars`, then validates.
    pub fn from_toml_with_overrides(
        text: &str,
        origin: &str,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let parse_err = |e: toml::de::Error| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        };
        // Typed parse of the file itself first, so diagnostics point at its lines.
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(parse_err)?;
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        if !overrides.is_empty() {
            overrides.sort();
            let mut table: toml::Table = toml::from_str(text).map_err(parse_err)?;
            for (var, value) in &overrides {
                apply_override(&mut table, var, value)?;
            }
            let names: Vec<&str> = overrides.iter().map(|(k, _)| k.as_str()).collect();
            cfg = table
                .try_into()
                .map_err(|e: toml::de::Error| ConfigError::Override {
                    var: names.join(", "),
                    message: e.to_string(),
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_with_overrides(&text, &path.display().to_string(), std::env::vars())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        crate::environment::GridWorld::new(self.env.clone())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.agent
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(ConfigError::Invalid)?;
        self.assay.validate().map_err(ConfigError::Invalid)?;
        if self.run.workers == 0 {
            return Err(ConfigError::Invalid("run.workers must be >= 1".into()));
        }
        Ok(())
    }

    /// The effective configuration as TOML.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The config with execution scope (seed list, worker count) cleared.
    /// Results of any one run depend only on this.
    pub fn identity(&self) -> ExperimentConfig {
        let mut c = self.clone();
        c.run.workers = 1;
        c.run.seeds.clear();
        c
    }

    /// Hash of everything that influences results: seeds can be trained in
    /// separate invocations and still share it.
    pub fn hash(&self) -> String {
        sha256_hex(self.identity().dump().as_bytes())
    }

    /// Per-run hash: the experiment hash refined by cohort and seed.
    pub fn run_hash(&self, cohort: &str, seed: u64) -> String {
        sha256_hex(format!("{}|{cohort}|{seed}", self.hash()).as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn apply_override(table: &mut toml::Table, var: &str, raw: &str) -> Result<(), ConfigError> {
    let err = |message: String| ConfigError::Override {
        var: var.to_string(),
        message,
    };
    let path: Vec<String> = var[ENV_PREFIX.len()..]
        .split("__")
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(err("empty key segment".into()));
    }
    let value = parse_override_value(raw);
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| err(format!("`{p}` is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Override values are read as TOML literals when possible (numbers, booleans,
/// arrays) and as bare strings otherwise.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<BTreeMap<String, toml::Value>>(&doc) {
        Ok(mut m) => m.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Seed lists on the command line: `3`, `0..7` (inclusive) or `1,4,9`.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let lo: u64 = a.trim().parse().map_err(|_| format!("bad seed `{a}`"))?;
            let hi: u64 = b.trim().parse().map_err(|_| format!("bad seed `{b}`"))?;
            if hi < lo {
                return Err(format!("empty seed range `{part}`"));
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?);
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}
