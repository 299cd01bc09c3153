//! The sequence-model contract and its implementations.
//!
//! A model maps a sequence `x` (`[T, o]`) to per-step channel tracks
//! (`[T, l]`). Fixed-length latent vectors are the time means of those
//! tracks, and swaps and resampling act on whole tracks so that decoding
//! always sees a full sequence of channels.

mod analytic;
mod checkpoint;
mod mlp;
mod neural;
mod spec;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub use analytic::AnalyticModel;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, CHECKPOINT_VERSION};
pub use mlp::{Activation, Mlp};
pub use neural::{Geometry, LossTerms, NeuralModel};
pub use spec::{AeParams, BetaVaeParams, ModelKind, ModelSpec, SkdParams, SparseAeParams, SsmSkdParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    Static,
    Dynamic,
    Untyped,
}

pub trait SequenceModel: Send + Sync {
    fn name(&self) -> &str;
    fn seq_len(&self) -> usize;
    fn frame_len(&self) -> usize;
    /// Number of channels `l`.
    fn latent_dim(&self) -> usize;
    fn channel_roles(&self) -> Vec<ChannelRole>;
    fn is_variational(&self) -> bool;
    /// Per-step channel tracks `[T, l]` of a flattened `[T, o]` sequence.
    fn channels(&self, x: &[f32]) -> Result<Tensor>;
    /// Flattened `[T, o]` sequence decoded from channel tracks.
    fn decode_channels(&self, c: &Tensor) -> Result<Vec<f32>>;

    fn latent_vector(&self, x: &[f32]) -> Result<Vec<f32>> {
        Ok(self.channels(x)?.mean_rows())
    }

    fn reconstruct(&self, x: &[f32]) -> Result<Vec<f32>> {
        self.decode_channels(&self.channels(x)?)
    }
}

fn check_indices(idx: &[usize], dim: usize) -> Result<()> {
    if let Some(&bad) = idx.iter().find(|&&i| i >= dim) {
        return Err(Error::Validation(format!(
            "channel index {bad} out of range for latent_dim {dim}"
        )));
    }
    Ok(())
}

/// Exchanges the channel tracks listed in `idx` between `a` and `b`.
pub fn swap_channels(a: &Tensor, b: &Tensor, idx: &[usize]) -> Result<(Tensor, Tensor)> {
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(Error::Shape(format!(
            "swap_channels on {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    check_indices(idx, a.cols())?;
    let (mut a2, mut b2) = (a.clone(), b.clone());
    let l = a.cols();
    for t in 0..a.rows() {
        for &j in idx {
            a2.data_mut()[t * l + j] = b.data()[t * l + j];
            b2.data_mut()[t * l + j] = a.data()[t * l + j];
        }
    }
    Ok((a2, b2))
}

/// Overwrites tracks `idx` of `c` with the columns of `values` (`[T, |idx|]`).
pub fn write_channels(c: &mut Tensor, idx: &[usize], values: &Tensor) -> Result<()> {
    check_indices(idx, c.cols())?;
    if values.rank() != 2 || values.rows() != c.rows() || values.cols() != idx.len() {
        return Err(Error::Shape(format!(
            "write_channels: {:?} into {} tracks of length {}",
            values.shape(),
            idx.len(),
            c.rows()
        )));
    }
    let l = c.cols();
    for t in 0..c.rows() {
        for (s, &j) in idx.iter().enumerate() {
            c.data_mut()[t * l + j] = values.at2(t, s);
        }
    }
    Ok(())
}

/// Columns `idx` of `c` as a `[T, |idx|]` tensor.
pub fn read_channels(c: &Tensor, idx: &[usize]) -> Result<Tensor> {
    check_indices(idx, c.cols())?;
    let mut data = Vec::with_capacity(c.rows() * idx.len());
    for t in 0..c.rows() {
        data.extend(idx.iter().map(|&j| c.at2(t, j)));
    }
    Tensor::new(vec![c.rows(), idx.len()], data)
}

/// Channel tracks of reference sequences, the empirical source for
/// resampling deterministic models.
#[derive(Debug, Clone, Default)]
pub struct LatentBank {
    tracks: Vec<Tensor>,
}

impl LatentBank {
    /// Encodes `samples` in parallel; samples the model cannot encode are
    /// left out.
    pub fn build(model: &dyn SequenceModel, samples: &[&[f32]]) -> Self {
        let tracks: Vec<Option<Tensor>> = samples.par_iter().map(|x| model.channels(x).ok()).collect();
        Self {
            tracks: tracks.into_iter().flatten().collect(),
        }
    }

    pub fn from_tracks(tracks: Vec<Tensor>) -> Self {
        Self { tracks }
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn tracks(&self) -> &[Tensor] {
        &self.tracks
    }
}

/// Fresh values for tracks `idx`, as `[T, |idx|]`. Variational models draw
/// standard normals in `(t, index)` order; other models copy the tracks of
/// a bank entry chosen by `rng`.
pub fn sample_latent(model: &dyn SequenceModel, bank: &LatentBank, idx: &[usize], rng: &mut Rng) -> Result<Tensor> {
    check_indices(idx, model.latent_dim())?;
    let t = model.seq_len();
    if model.is_variational() {
        let data = (0..t * idx.len()).map(|_| rng.normal() as f32).collect();
        return Tensor::new(vec![t, idx.len()], data);
    }
    if bank.is_empty() {
        return Err(Error::Validation("latent bank is empty".into()));
    }
    let pick = &bank.tracks[rng.below(bank.len())];
    read_channels(pick, idx)
}
