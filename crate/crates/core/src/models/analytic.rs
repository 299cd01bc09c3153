//! A perfectly disentangled reference model: channel `i` holds the label
//! index of factor `i`, and decoding renders the clean configuration.

use std::sync::Arc;

use crate::data::{Enumeration, FactorKind};
use crate::error::Result;
use crate::models::{ChannelRole, SequenceModel};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AnalyticModel {
    enumeration: Arc<Enumeration>,
}

impl AnalyticModel {
    pub fn new(enumeration: Arc<Enumeration>) -> Self {
        Self { enumeration }
    }
}

impl SequenceModel for AnalyticModel {
    fn name(&self) -> &str {
        "analytic"
    }

    fn seq_len(&self) -> usize {
        self.enumeration.seq_len()
    }

    fn frame_len(&self) -> usize {
        self.enumeration.frame_len()
    }

    fn latent_dim(&self) -> usize {
        self.enumeration.factors().len()
    }

    fn channel_roles(&self) -> Vec<ChannelRole> {
        self.enumeration
            .factors()
            .iter()
            .map(|f| match f.kind {
                FactorKind::Static => ChannelRole::Static,
                FactorKind::Dynamic => ChannelRole::Dynamic,
            })
            .collect()
    }

    fn is_variational(&self) -> bool {
        false
    }

    fn channels(&self, x: &[f32]) -> Result<Tensor> {
        let labels = self.enumeration.sequence_labels(x)?;
        let t = self.seq_len();
        let row: Vec<f32> = labels.iter().map(|&l| l as f32).collect();
        Tensor::new(vec![t, row.len()], row.repeat(t))
    }

    /// Rounds each track's time mean to the nearest valid label.
    fn decode_channels(&self, c: &Tensor) -> Result<Vec<f32>> {
        let means = c.mean_rows();
        let labels: Vec<u32> = means
            .iter()
            .zip(self.enumeration.factors())
            .map(|(&m, f)| (m.round().max(0.0) as usize).min(f.cardinality() - 1) as u32)
            .collect();
        Ok(self.enumeration.render(&labels)?.to_vec())
    }
}
