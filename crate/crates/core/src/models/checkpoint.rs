//! Checkpoint directories: `manifest.json`, `params.bin` (every parameter
//! as f32 LE in manifest order) and, for SKD, `koopman.bin` (the global
//! Koopman matrix as f64 LE, row-major).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::f32_bytes;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::models::neural::{Geometry, NeuralModel};
use crate::models::spec::ModelSpec;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub version: u32,
    pub spec: ModelSpec,
    pub geometry: Geometry,
    pub seed: u64,
    pub epoch: usize,
    pub params: Vec<ParamEntry>,
    pub koopman_dim: Option<usize>,
}

pub fn save_checkpoint(model: &NeuralModel, seed: u64, epoch: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let params: Vec<ParamEntry> = model
        .params
        .iter()
        .map(|(name, t)| ParamEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
        })
        .collect();
    let mut blob = Vec::new();
    for t in model.params.values() {
        blob.extend(f32_bytes(t.data()));
    }
    fs::write(dir.join("params.bin"), blob)?;
    let koopman_dim = model.koopman().map(|d| d.matrix.rows());
    let kpath = dir.join("koopman.bin");
    if let Some(d) = model.koopman() {
        let bytes: Vec<u8> = d.matrix.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&kpath, bytes)?;
    } else if kpath.exists() {
        fs::remove_file(&kpath)?;
    }
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        spec: model.spec.clone(),
        geometry: model.geometry,
        seed,
        epoch,
        params,
        koopman_dim,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(NeuralModel, CheckpointManifest)> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
        other => {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {other:?} (expected {CHECKPOINT_VERSION})"
            )))
        }
    }
    let manifest: CheckpointManifest = serde_json::from_value(raw)?;
    let mut model = NeuralModel::new(manifest.spec.clone(), manifest.geometry, manifest.seed)?;
    let layout: Vec<ParamEntry> = model
        .params
        .iter()
        .map(|(name, t)| ParamEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
        })
        .collect();
    if layout != manifest.params {
        return Err(Error::Format("checkpoint parameter layout does not match its model spec".into()));
    }
    let blob = fs::read(dir.join("params.bin"))?;
    let total: usize = layout.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if blob.len() != total * 4 {
        return Err(Error::Format(format!(
            "params.bin has {} bytes, expected {}",
            blob.len(),
            total * 4
        )));
    }
    let mut floats = blob.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    for (slot, entry) in model.params.values_mut().iter_mut().zip(&layout) {
        let n: usize = entry.shape.iter().product();
        let data: Vec<f32> = floats.by_ref().take(n).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {}", entry.name)));
        }
        *slot = Tensor::new(entry.shape.clone(), data)?;
    }
    if let Some(k) = manifest.koopman_dim {
        let bytes = fs::read(dir.join("koopman.bin"))?;
        if bytes.len() != k * k * 8 {
            return Err(Error::Format(format!("koopman.bin has {} bytes, expected {}", bytes.len(), k * k * 8)));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        model.set_koopman_matrix(Mat::from_vec(k, k, vals)?)?;
    }
    Ok((model, manifest))
}
