//! Factor classifiers for decoded outputs.

mod remote;
mod server;

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{Dataset, Enumeration, FactorKind, FactorSpec};
use crate::error::{Error, Result};
use crate::learners::{Gbt, GbtConfig};
use crate::rng::Rng;

pub use remote::{RemoteJudge, DEFAULT_TIMEOUT_MS};
pub use server::{serve, spawn_server, JudgeServer, ServerInfo};

/// Feature cap per tree for judges trained on raw pixels or samples.
pub const TRAINED_JUDGE_MAX_FEATURES: usize = 256;

pub trait Judge: Send + Sync {
    fn factors(&self) -> &[FactorSpec];

    /// Label index of `factor` for a flattened `[T, o]` sequence.
    fn judge(&self, x: &[f32], factor: usize) -> Result<u32>;

    fn judge_all(&self, x: &[f32]) -> Result<Vec<u32>> {
        (0..self.factors().len()).map(|f| self.judge(x, f)).collect()
    }

    /// Label index of a static `factor` for a single frame.
    fn judge_frame(&self, _frame: &[f32], factor: usize) -> Result<u32> {
        Err(Error::Unsupported(format!(
            "this judge cannot label single frames (factor {factor})"
        )))
    }

    /// Frame labels of every static factor; dynamic factors are `None`.
    fn judge_frame_all(&self, frame: &[f32]) -> Result<Vec<Option<u32>>> {
        self.factors()
            .iter()
            .enumerate()
            .map(|(f, spec)| match spec.kind {
                FactorKind::Static => self.judge_frame(frame, f).map(Some),
                FactorKind::Dynamic => Ok(None),
            })
            .collect()
    }
}

fn check_factor(factors: &[FactorSpec], factor: usize) -> Result<()> {
    if factor >= factors.len() {
        return Err(Error::Validation(format!("factor index {factor} out of range")));
    }
    Ok(())
}

fn check_static(factors: &[FactorSpec], factor: usize) -> Result<()> {
    check_factor(factors, factor)?;
    if factors[factor].kind != FactorKind::Static {
        return Err(Error::Unsupported(format!(
            "factor {} is dynamic and cannot be read from one frame",
            factors[factor].name
        )));
    }
    Ok(())
}

/// Nearest neighbour over every clean render of the generator.
#[derive(Debug, Clone)]
pub struct OracleJudge {
    enumeration: Arc<Enumeration>,
}

impl OracleJudge {
    pub fn new(enumeration: Arc<Enumeration>) -> Self {
        Self { enumeration }
    }

    pub fn enumeration(&self) -> &Arc<Enumeration> {
        &self.enumeration
    }
}

impl Judge for OracleJudge {
    fn factors(&self) -> &[FactorSpec] {
        self.enumeration.factors()
    }

    fn judge(&self, x: &[f32], factor: usize) -> Result<u32> {
        check_factor(self.factors(), factor)?;
        Ok(self.enumeration.sequence_labels(x)?[factor])
    }

    fn judge_all(&self, x: &[f32]) -> Result<Vec<u32>> {
        self.enumeration.sequence_labels(x)
    }

    fn judge_frame(&self, frame: &[f32], factor: usize) -> Result<u32> {
        check_static(self.factors(), factor)?;
        Ok(self.enumeration.frame_labels(frame)?[factor])
    }

    fn judge_frame_all(&self, frame: &[f32]) -> Result<Vec<Option<u32>>> {
        let labels = self.enumeration.frame_labels(frame)?;
        Ok(self
            .factors()
            .iter()
            .zip(labels)
            .map(|(f, l)| (f.kind == FactorKind::Static).then_some(l))
            .collect())
    }
}

/// One boosted classifier per factor on whole sequences, and one per
/// static factor on single frames.
#[derive(Debug, Clone)]
pub struct TrainedJudge {
    factors: Vec<FactorSpec>,
    frame_len: usize,
    sequence_models: Vec<Gbt>,
    frame_models: Vec<Option<Gbt>>,
}

impl TrainedJudge {
    /// Fits on the training split of `ds`. Frame classifiers see two
    /// frames per sequence: the first and one chosen with `seed`.
    pub fn fit(ds: &Dataset, seed: u64) -> Result<Self> {
        let train = ds.split("train")?;
        if train.len() < 2 {
            return Err(Error::Degenerate("trained judge needs at least two training samples".into()));
        }
        let s = ds.manifest.sample_len();
        let o = ds.frame_len();
        let t = ds.seq_len();
        let mut xs = Vec::with_capacity(train.len() * s);
        for &i in &train {
            xs.extend_from_slice(ds.sequence(i));
        }
        let mut rng = Rng::derived(seed, "judge/frames");
        let mut frames = Vec::new();
        let mut frame_rows = Vec::new();
        for &i in &train {
            for step in [0, 1 + rng.below(t - 1)] {
                frames.extend_from_slice(&ds.sequence(i)[step * o..(step + 1) * o]);
                frame_rows.push(i);
            }
        }
        let factors = ds.factors().to_vec();
        let fitted: Vec<(Gbt, Option<Gbt>)> = (0..factors.len())
            .into_par_iter()
            .map(|f| {
                let cfg = GbtConfig {
                    seed: crate::rng::derive_seed(seed, &format!("judge/{f}")),
                    ..GbtConfig::default()
                };
                let y: Vec<u32> = train.iter().map(|&i| ds.labels(i)[f]).collect();
                let seq = Gbt::fit(&xs, s, &y, &cfg.with_feature_cap(s, TRAINED_JUDGE_MAX_FEATURES))?;
                let frame = if factors[f].kind == FactorKind::Static {
                    let yf: Vec<u32> = frame_rows.iter().map(|&i| ds.labels(i)[f]).collect();
                    Some(Gbt::fit(&frames, o, &yf, &cfg.with_feature_cap(o, TRAINED_JUDGE_MAX_FEATURES))?)
                } else {
                    None
                };
                Ok((seq, frame))
            })
            .collect::<Result<_>>()?;
        let (sequence_models, frame_models) = fitted.into_iter().unzip();
        Ok(Self {
            factors,
            frame_len: o,
            sequence_models,
            frame_models,
        })
    }
}

impl Judge for TrainedJudge {
    fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    fn judge(&self, x: &[f32], factor: usize) -> Result<u32> {
        check_factor(&self.factors, factor)?;
        self.sequence_models[factor].predict(x)
    }

    fn judge_frame(&self, frame: &[f32], factor: usize) -> Result<u32> {
        check_static(&self.factors, factor)?;
        if frame.len() != self.frame_len {
            return Err(Error::Shape(format!("frame has {} values, expected {}", frame.len(), self.frame_len)));
        }
        self.frame_models[factor]
            .as_ref()
            .expect("static factors have frame models")
            .predict(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, Shapes2D16, Ts24};

    #[test]
    fn oracle_is_exact_on_clean_data() {
        let gen = Ts24::new(4, 0.0).unwrap();
        let ds = generate(&gen, 1, [0.7, 0.15, 0.15]).unwrap();
        let judge = OracleJudge::new(Arc::new(Enumeration::new(&gen)));
        for i in 0..ds.len() {
            assert_eq!(judge.judge_all(ds.sequence(i)).unwrap(), ds.labels(i));
        }
        assert!(judge.judge_frame(&ds.sequence(0)[..6], 3).is_err());
    }

    #[test]
    fn frame_and_sequence_judgments_agree_on_static_factors() {
        let gen = Shapes2D16::new();
        let judge = OracleJudge::new(Arc::new(Enumeration::new(&gen)));
        let e = judge.enumeration().clone();
        for i in (0..e.len()).step_by(97) {
            let seq = e.sequence(i);
            let labels = judge.judge_all(seq).unwrap();
            for frame in seq.chunks(e.frame_len()) {
                for (f, l) in judge.judge_frame_all(frame).unwrap().into_iter().enumerate() {
                    if let Some(l) = l {
                        assert_eq!(l, labels[f]);
                    }
                }
            }
        }
    }
}
