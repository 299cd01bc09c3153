//! Model kinds and their hyperparameter schemas.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::koopman::{SpectralConfig, StaticMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ae,
    Vae,
    BetaVae,
    SparseAe,
    Skd,
    SsmSkd,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Ae,
        ModelKind::Vae,
        ModelKind::BetaVae,
        ModelKind::SparseAe,
        ModelKind::Skd,
        ModelKind::SsmSkd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::Vae => "vae",
            ModelKind::BetaVae => "beta-vae",
            ModelKind::SparseAe => "sparse-ae",
            ModelKind::Skd => "skd",
            ModelKind::SsmSkd => "ssm-skd",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model {name:?} (expected one of ae, vae, beta-vae, sparse-ae, skd, ssm-skd)"
                ))
            })
    }

    pub fn is_variational(self) -> bool {
        matches!(self, ModelKind::Vae | ModelKind::BetaVae)
    }

    pub fn is_koopman(self) -> bool {
        matches!(self, ModelKind::Skd | ModelKind::SsmSkd)
    }
}

fn default_latent_dim() -> usize {
    16
}
fn default_hidden_dims() -> Vec<usize> {
    vec![128]
}
fn default_beta() -> f64 {
    4.0
}
fn default_sparsity() -> f64 {
    1.0
}
fn default_k_dim() -> usize {
    16
}
fn default_hidden_dim() -> usize {
    128
}
fn default_w_rec() -> f64 {
    12.0
}
fn default_one() -> f64 {
    1.0
}
fn default_static_size() -> usize {
    6
}
fn default_static_mode() -> StaticMode {
    StaticMode::Ball
}
fn default_thresh() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeParams {
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaVaeParams {
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseAeParams {
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_sparsity")]
    pub sparsity_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkdParams {
    #[serde(default = "default_k_dim")]
    pub k_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_w_rec")]
    pub w_rec: f64,
    #[serde(default = "default_one")]
    pub w_pred: f64,
    #[serde(default = "default_one")]
    pub w_eigs: f64,
    #[serde(default = "default_static_size")]
    pub static_size: usize,
    #[serde(default = "default_static_mode")]
    pub static_mode: StaticMode,
    #[serde(default = "default_thresh")]
    pub dynamic_thresh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsmSkdParams {
    #[serde(default = "default_k_dim")]
    pub k_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_w_rec")]
    pub w_rec: f64,
    #[serde(default = "default_one")]
    pub w_pred: f64,
    #[serde(default = "default_one")]
    pub w_eigs: f64,
    #[serde(default = "default_static_mode")]
    pub static_mode: StaticMode,
    #[serde(default = "default_thresh")]
    pub dynamic_thresh: f64,
}

/// A model kind with fully defaulted, validated hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params", rename_all = "kebab-case")]
pub enum ModelSpec {
    Ae(AeParams),
    Vae(AeParams),
    BetaVae(BetaVaeParams),
    SparseAe(SparseAeParams),
    Skd(SkdParams),
    SsmSkd(SsmSkdParams),
}

impl ModelSpec {
    /// Parses `params` against the schema of `kind`; unknown keys and
    /// out-of-range values are rejected.
    pub fn from_parts(kind: ModelKind, params: Value) -> Result<Self> {
        let params = if params.is_null() { Value::Object(Default::default()) } else { params };
        let parse_err = |e: serde_json::Error| Error::Config(format!("{} params: {e}", kind.name()));
        let spec = match kind {
            ModelKind::Ae => ModelSpec::Ae(serde_json::from_value(params).map_err(parse_err)?),
            ModelKind::Vae => ModelSpec::Vae(serde_json::from_value(params).map_err(parse_err)?),
            ModelKind::BetaVae => ModelSpec::BetaVae(serde_json::from_value(params).map_err(parse_err)?),
            ModelKind::SparseAe => ModelSpec::SparseAe(serde_json::from_value(params).map_err(parse_err)?),
            ModelKind::Skd => ModelSpec::Skd(serde_json::from_value(params).map_err(parse_err)?),
            ModelKind::SsmSkd => ModelSpec::SsmSkd(serde_json::from_value(params).map_err(parse_err)?),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn defaults(kind: ModelKind) -> Self {
        Self::from_parts(kind, Value::Null).expect("defaults are valid")
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Ae(_) => ModelKind::Ae,
            ModelSpec::Vae(_) => ModelKind::Vae,
            ModelSpec::BetaVae(_) => ModelKind::BetaVae,
            ModelSpec::SparseAe(_) => ModelKind::SparseAe,
            ModelSpec::Skd(_) => ModelKind::Skd,
            ModelSpec::SsmSkd(_) => ModelKind::SsmSkd,
        }
    }

    /// Spectral settings of the Koopman kinds.
    pub fn spectral(&self) -> Option<SpectralConfig> {
        match self {
            ModelSpec::Skd(p) => Some(SpectralConfig {
                k_dim: p.k_dim,
                static_size: p.static_size,
                static_mode: p.static_mode,
                dynamic_thresh: p.dynamic_thresh,
                w_rec: p.w_rec,
                w_pred: p.w_pred,
                w_eigs: p.w_eigs,
            }),
            ModelSpec::SsmSkd(p) => Some(SpectralConfig {
                k_dim: p.k_dim,
                static_size: 1,
                static_mode: p.static_mode,
                dynamic_thresh: p.dynamic_thresh,
                w_rec: p.w_rec,
                w_pred: p.w_pred,
                w_eigs: p.w_eigs,
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_ae = |latent: usize, hidden: &[usize]| -> Result<()> {
            if latent == 0 {
                return Err(Error::Config("latent_dim must be positive".into()));
            }
            if hidden.contains(&0) {
                return Err(Error::Config("hidden_dims entries must be positive".into()));
            }
            Ok(())
        };
        match self {
            ModelSpec::Ae(p) | ModelSpec::Vae(p) => check_ae(p.latent_dim, &p.hidden_dims),
            ModelSpec::BetaVae(p) => {
                check_ae(p.latent_dim, &p.hidden_dims)?;
                if !(p.beta >= 0.0 && p.beta.is_finite()) {
                    return Err(Error::Config(format!("beta must be >= 0, got {}", p.beta)));
                }
                Ok(())
            }
            ModelSpec::SparseAe(p) => {
                check_ae(p.latent_dim, &p.hidden_dims)?;
                if !(p.sparsity_weight >= 0.0 && p.sparsity_weight.is_finite()) {
                    return Err(Error::Config(format!(
                        "sparsity_weight must be >= 0, got {}",
                        p.sparsity_weight
                    )));
                }
                Ok(())
            }
            ModelSpec::Skd(SkdParams { hidden_dim, .. }) | ModelSpec::SsmSkd(SsmSkdParams { hidden_dim, .. }) => {
                if *hidden_dim == 0 {
                    return Err(Error::Config("hidden_dim must be positive".into()));
                }
                self.spectral().expect("koopman kinds").validate()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_fill_in() {
        let s = ModelSpec::from_parts(ModelKind::Skd, json!({})).unwrap();
        let cfg = s.spectral().unwrap();
        assert_eq!((cfg.k_dim, cfg.static_size), (16, 6));
        assert_eq!(ModelSpec::defaults(ModelKind::SsmSkd).spectral().unwrap().static_size, 1);
    }

    #[test]
    fn schema_is_per_model() {
        assert!(ModelSpec::from_parts(ModelKind::Ae, json!({"beta": 2.0})).is_err());
        assert!(ModelSpec::from_parts(ModelKind::SsmSkd, json!({"static_size": 2})).is_err());
        assert!(ModelSpec::from_parts(ModelKind::BetaVae, json!({"beta": 2.0})).is_ok());
    }

    #[test]
    fn dynamic_thresh_range() {
        assert!(ModelSpec::from_parts(ModelKind::Skd, json!({"dynamic_thresh": 1.5})).is_err());
        assert!(ModelSpec::from_parts(ModelKind::Skd, json!({"dynamic_thresh": 0.875})).is_ok());
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in ModelKind::ALL {
            assert_eq!(ModelKind::parse(k.name()).unwrap(), k);
        }
        assert!(ModelKind::parse("mgp-vae").is_err());
    }
}
