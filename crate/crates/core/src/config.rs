//! Pipeline configuration: one TOML document, usually written with dotted
//! keys (`embed.d_hidden = 64`). Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionConfig;
use crate::cluster::{
    AffinityParams, BirchParams, ClusterConfig, KMeansParams, KPolicy, MeanShiftParams, SpectralParams,
};
use crate::embed::EmbedConfig;
use crate::flow::DEFAULT_MIN_UNIQUE_ACTIONS;
use crate::ingest::{IngestOptions, DEFAULT_SAME_VALUE_THRESHOLD};
use crate::profile::ProfileParams;

/// Environment variable read when neither the command line nor the config
/// file sets a seed.
pub const SEED_ENV: &str = "CHAINFLOW_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    pub strict: bool,
    pub same_value_threshold: usize,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            strict: false,
            same_value_threshold: DEFAULT_SAME_VALUE_THRESHOLD,
        }
    }
}

impl IngestSection {
    pub fn options(&self) -> IngestOptions {
        IngestOptions {
            strict: self.strict,
            same_value_threshold: self.same_value_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub min_unique_actions: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            min_unique_actions: DEFAULT_MIN_UNIQUE_ACTIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    /// `all` or a comma-separated list of algorithm names.
    pub algorithms: String,
    /// Fixed cluster count; the elbow picks one when unset.
    pub k: Option<usize>,
    pub k_max: usize,
    /// Whose partition is profiled.
    pub profile_algorithm: String,
    pub kmeans: KMeansParams,
    pub mean_shift: MeanShiftParams,
    pub birch: BirchParams,
    pub spectral: SpectralParams,
    pub affinity: AffinityParams,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            algorithms: "all".into(),
            k: None,
            k_max: 12,
            profile_algorithm: "kmeans".into(),
            kmeans: KMeansParams::default(),
            mean_shift: MeanShiftParams::default(),
            birch: BirchParams::default(),
            spectral: SpectralParams::default(),
            affinity: AffinityParams::default(),
        }
    }
}

impl ClusterSection {
    pub fn algorithm_config(&self) -> ClusterConfig {
        ClusterConfig {
            kmeans: self.kmeans.clone(),
            mean_shift: self.mean_shift.clone(),
            birch: self.birch.clone(),
            spectral: self.spectral.clone(),
            affinity: self.affinity.clone(),
        }
    }

    pub fn policy(&self) -> KPolicy {
        match self.k {
            Some(k) => KPolicy::Fixed(k),
            None => KPolicy::Elbow { k_max: self.k_max },
        }
    }
}

/// Every tunable of the pipeline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub ingest: IngestSection,
    pub actions: ActionConfig,
    pub flow: FlowSection,
    pub embed: EmbedConfig,
    pub cluster: ClusterSection,
    pub profile: ProfileParams,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Apply `key=value` with a dotted key. The value is read as a TOML
    /// literal and falls back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse(format!("expected key=value, got {assignment:?}")))?;
        let value = parse_literal(raw.trim());
        let mut doc = toml::Value::try_from(&*self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut slot = &mut doc;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = slot
                .as_table_mut()
                .ok_or_else(|| ConfigError::Parse(format!("{key}: {part} is not a table")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            slot = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let next: Self = doc.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(format!("{key}: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.embed.d_hidden == 0 || self.embed.d_out == 0 {
            return bad("embed.d_hidden and embed.d_out must be positive".into());
        }
        if !(self.embed.train_fraction > 0.0 && self.embed.train_fraction <= 1.0) {
            return bad(format!("embed.train_fraction must be in (0, 1], got {}", self.embed.train_fraction));
        }
        if self.flow.min_unique_actions == 0 {
            return bad("flow.min_unique_actions must be positive".into());
        }
        if self.cluster.k == Some(0) {
            return bad("cluster.k must be positive".into());
        }
        if self.cluster.k_max < 2 {
            return bad("cluster.k_max must be at least 2".into());
        }
        self.cluster
            .algorithm_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.profile.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Command-line seed, then the file, then the environment, then 0.
    pub fn resolve_seed(&self, cli: Option<u64>) -> Result<u64, ConfigError> {
        if let Some(s) = cli.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
