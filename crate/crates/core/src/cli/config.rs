//! The run configuration file: one JSON document holding the generator and
//! trainer sections under a schema version.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::synthdata::GenConfig;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub generate: GenConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Steps between retained intermediate checkpoints; 0 keeps only the final one.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

fn default_checkpoint_every() -> u64 {
    500
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            generate: GenConfig::default(),
            train: TrainConfig::default(),
            checkpoint_every: default_checkpoint_every(),
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_json(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn to_pretty_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_pretty_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sections_may_be_omitted() {
        let cfg = RunConfig::from_json(r#"{"schema_version": 1, "train": {"lambda0": 0.5}}"#).unwrap();
        assert_eq!(cfg.generate, GenConfig::default());
        assert_eq!(cfg.train.lambda0, 0.5);
        assert_eq!(cfg.train.momentum_n, TrainConfig::default().momentum_n);
    }

    #[test]
    fn rejects_wrong_schema_and_unknown_keys() {
        assert!(matches!(RunConfig::from_json(r#"{"schema_version": 2}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"schema_version": 1, "extra": 0}"#), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_json(r#"{"schema_version": 1, "train": {"lamda0": 0.5}}"#),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::from_json("{}").is_err());
    }
}
