//! Engine configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experience::ExperienceParams;
use crate::graph::DEFAULT_THETA;
use crate::ledger::DEFAULT_DECAY_EPOCH;
use crate::solver::ReputationParams;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unsupported config schema version {0} (expected {CONFIG_SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    /// Positive/negative split threshold.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerConfig {
    /// Blocks per decay step, used for ledgers without a header.
    pub decay_epoch: u64,
    /// Sync every appended event to disk.
    pub fsync: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub schema_version: u32,
    pub experience: ExperienceParams,
    pub reputation: ReputationParams,
    pub graph: GraphConfig,
    pub ledger: LedgerConfig,
    pub paths: PathsConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            experience: ExperienceParams::default(),
            reputation: ReputationParams::default(),
            graph: GraphConfig {
                theta: DEFAULT_THETA,
            },
            ledger: LedgerConfig {
                decay_epoch: DEFAULT_DECAY_EPOCH,
                fsync: false,
            },
            paths: PathsConfig {
                output_dir: PathBuf::from("der-out"),
            },
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(self.schema_version));
        }
        self.experience
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.reputation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.graph.theta > 0.0 && self.graph.theta < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "graph.theta must lie in (0, 1), got {}",
                self.graph.theta
            )));
        }
        if self.ledger.decay_epoch == 0 {
            return Err(ConfigError::Invalid(
                "ledger.decay_epoch must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let c = EngineConfig::default();
        let text = c.to_toml_string();
        assert!(text.contains("schema_version = 1"));
        assert!(text.contains("[experience]"));
        let back = EngineConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = EngineConfig::default().to_toml_string() + "\nbogus = 3\n";
        assert!(matches!(
            EngineConfig::from_toml_str(&text),
            Err(ConfigError::Parse(_))
        ));
        let text = EngineConfig::default()
            .to_toml_string()
            .replace("[graph]\n", "[graph]\nthresh = 0.4\n");
        assert!(EngineConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn version_and_values_checked() {
        let text = EngineConfig::default()
            .to_toml_string()
            .replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(
            EngineConfig::from_toml_str(&text),
            Err(ConfigError::SchemaVersion(7))
        ));
        let mut c = EngineConfig::default();
        c.experience.beta = 0.5;
        assert!(c.validate().is_err());
        let mut c = EngineConfig::default();
        c.ledger.decay_epoch = 0;
        assert!(c.validate().is_err());
    }
}
