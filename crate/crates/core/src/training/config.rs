//! JSON training configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::optim::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            patience: 10,
            min_delta: 1e-5,
        }
    }
}

fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: String,
    dataset: PathBuf,
    #[serde(default = "default_epochs")]
    epochs: usize,
    #[serde(default = "default_batch")]
    batch_size: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    optimizer: AdamConfig,
    #[serde(default)]
    params: Value,
    #[serde(default)]
    early_stopping: EarlyStopping,
    #[serde(default)]
    max_seconds: Option<f64>,
}

/// A validated training run description.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub model: ModelSpec,
    pub dataset: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub early_stopping: EarlyStopping,
    /// Wall-clock cap; runs that hit it are no longer reproducible.
    pub max_seconds: Option<f64>,
}

impl TrainingConfig {
    pub fn new(model: ModelSpec, dataset: impl Into<PathBuf>) -> Self {
        Self {
            model,
            dataset: dataset.into(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed: 0,
            optimizer: AdamConfig::default(),
            early_stopping: EarlyStopping::default(),
            max_seconds: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str::<NoDuplicates>(text).map_err(|e| Error::Config(e.to_string()))?;
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let kind = ModelKind::parse(&raw.model)?;
        let cfg = Self {
            model: ModelSpec::from_parts(kind, raw.params)?,
            dataset: raw.dataset,
            epochs: raw.epochs,
            batch_size: raw.batch_size,
            seed: raw.seed,
            optimizer: raw.optimizer,
            early_stopping: raw.early_stopping,
            max_seconds: raw.max_seconds,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative dataset path resolves against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        if cfg.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.early_stopping.min_delta >= 0.0) {
            return Err(Error::Config("early_stopping.min_delta must be >= 0".into()));
        }
        if let Some(s) = self.max_seconds {
            if !(s > 0.0) {
                return Err(Error::Config(format!("max_seconds must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// The config with every default written out.
    pub fn to_json(&self) -> Value {
        let spec = serde_json::to_value(&self.model).expect("specs serialize");
        serde_json::json!({
            "model": spec["model"],
            "dataset": self.dataset,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "optimizer": self.optimizer,
            "params": spec["params"],
            "early_stopping": self.early_stopping,
            "max_seconds": self.max_seconds,
        })
    }
}

/// Accepts any JSON document and fails on an object with a repeated key.
struct NoDuplicates;

impl<'de> Deserialize<'de> for NoDuplicates {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(NoDupVisitor)
    }
}

struct NoDupVisitor;

impl<'de> Visitor<'de> for NoDupVisitor {
    type Value = NoDuplicates;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("any JSON value")
    }

    fn visit_bool<E>(self, _: bool) -> std::result::Result<Self::Value, E> {
        Ok(NoDuplicates)
    }
    fn visit_i64<E>(self, _: i64) -> std::result::Result<Self::Value, E> {
        Ok(NoDuplicates)
    }
    fn visit_u64<E>(self, _: u64) -> std::result::Result<Self::Value, E> {
        Ok(NoDuplicates)
    }
    fn visit_f64<E>(self, _: f64) -> std::result::Result<Self::Value, E> {
        Ok(NoDuplicates)
    }
    fn visit_str<E>(self, _: &str) -> std::result::Result<Self::Value, E> {
        Ok(NoDuplicates)
    }
    fn visit_unit<E>(self) -> std::result::Result<Self::Value, E> {
        Ok(NoDuplicates)
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
        while seq.next_element::<NoDuplicates>()?.is_some() {}
        Ok(NoDuplicates)
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
        let mut keys = std::collections::HashSet::new();
        while let Some(key) = map.next_key::<String>()? {
            if !keys.insert(key.clone()) {
                return Err(de::Error::custom(format!("duplicate key {key:?}")));
            }
            map.next_value::<NoDuplicates>()?;
        }
        Ok(NoDuplicates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = TrainingConfig::parse(r#"{"model": "ae", "dataset": "d"}"#).unwrap();
        assert_eq!(c.epochs, 30);
        assert_eq!(c.early_stopping, EarlyStopping::default());
        assert_eq!(c.model, ModelSpec::defaults(ModelKind::Ae));
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            r#"{"model": "skd", "dataset": "d", "params": {"dynamic_thresh": 1.5}}"#,
            r#"{"model": "ae", "dataset": "d", "dataset": "e"}"#,
            r#"{"model": "ae", "dataset": "d", "params": {"latent_dim": 4, "latent_dim": 5}}"#,
            r#"{"model": "ae", "dataset": "d", "colour": 1}"#,
            r#"{"model": "ae", "dataset": "d", "epochs": "ten"}"#,
            r#"{"model": "ae", "dataset": "d", "optimizer": {"lr": -1}}"#,
        ] {
            assert!(matches!(TrainingConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn normalized_json_parses_back() {
        let c = TrainingConfig::parse(r#"{"model": "ssm-skd", "dataset": "d", "seed": 4}"#).unwrap();
        let back = TrainingConfig::parse(&c.to_json().to_string()).unwrap();
        assert_eq!(back, c);
    }
}
