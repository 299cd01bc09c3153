//! Equal-budget training and evaluation of several models on Shapes.

use std::sync::Arc;
use std::time::{Duration, Instant};

use msd_core::data::{generate, Enumeration, Shapes2D16};
use msd_core::judges::OracleJudge;
use msd_core::metrics::MetricReport;
use msd_core::models::{load_checkpoint, ModelKind, ModelSpec};
use msd_core::pipeline::{evaluate, explore, EvalConfig, LesStrategy};
use msd_core::training::{train_on, TrainingConfig};
use serde_json::Value;

pub struct DeskResult {
    pub model: String,
    pub report: MetricReport,
    pub train_time: Duration,
}

/// Trains every `(kind, params)` for `epochs` epochs without early
/// stopping, locates factors with the predictor strategy and evaluates
/// with the oracle judge. Everything derives from `seed`.
pub fn desk_study(models: &[(&str, Value)], epochs: usize, seed: u64) -> Vec<DeskResult> {
    let gen = Shapes2D16::new();
    let ds = generate(&gen, seed, [0.7, 0.15, 0.15]).unwrap();
    let judge = OracleJudge::new(Arc::new(Enumeration::new(&gen)));
    models
        .iter()
        .map(|(kind, params)| {
            let kind = ModelKind::parse(kind).unwrap();
            let mut cfg = TrainingConfig::new(ModelSpec::from_parts(kind, params.clone()).unwrap(), "unused");
            cfg.epochs = epochs;
            cfg.seed = seed;
            cfg.early_stopping.patience = usize::MAX;
            let dir = tempfile::tempdir().unwrap();
            let t = Instant::now();
            let out = train_on(&cfg, &ds, dir.path()).unwrap();
            let train_time = t.elapsed();
            let (model, _) = load_checkpoint(&out.checkpoint).unwrap();
            let map = explore(&model, &ds, LesStrategy::Predictor, None, seed).unwrap();
            let eval_cfg = EvalConfig {
                runs: 1,
                seed,
                ..EvalConfig::default()
            };
            let eval = evaluate(&model, kind.name(), &judge, &map, &ds, &eval_cfg).unwrap();
            DeskResult {
                model: kind.name().to_string(),
                report: eval.report,
                train_time,
            }
        })
        .collect()
}
