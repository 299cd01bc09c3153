//! Full exploration and evaluation runs.

use std::sync::Arc;

use msd_core::data::{generate, Dataset, Enumeration, Shapes2D16};
use msd_core::judges::OracleJudge;
use msd_core::les::FactorMap;
use msd_core::metrics::MetricReport;
use msd_core::models::{AnalyticModel, SequenceModel};
use msd_core::pipeline::{evaluate, explore, EvalConfig, LesStrategy};

pub fn value(report: &MetricReport, name: &str) -> f64 {
    report
        .values
        .iter()
        .find(|v| v.metric.name() == name)
        .unwrap_or_else(|| panic!("metric {name} missing from report"))
        .mean
}

pub struct AnalyticRun {
    pub report: MetricReport,
    pub predictor_exact: bool,
    pub swap_exact: bool,
}

impl AnalyticRun {
    pub fn dci(&self) -> [f64; 3] {
        ["DCI-M", "DCI-C", "DCI-E"].map(|m| value(&self.report, m))
    }

    pub fn consistency(&self) -> [f64; 3] {
        ["C-Swap", "C-Sample", "GC-Sample"].map(|m| value(&self.report, m))
    }
}

/// Explores the perfectly disentangled reference model with both
/// strategies and evaluates it on the identity map with 500 trials.
pub fn analytic_run(seed: u64) -> AnalyticRun {
    let gen = Shapes2D16::new();
    let ds: Dataset = generate(&gen, seed, [0.7, 0.15, 0.15]).unwrap();
    let enumeration = Arc::new(Enumeration::new(&gen));
    let model = AnalyticModel::new(enumeration.clone());
    let judge = OracleJudge::new(enumeration);
    let truth = FactorMap::identity(ds.factors().to_vec());
    let exact = |m: &FactorMap| m.subsets == truth.subsets;
    let pred = explore(&model, &ds, LesStrategy::Predictor, None, seed).unwrap();
    let swap = explore(&model, &ds, LesStrategy::Swap, Some(&judge), seed).unwrap();
    let cfg = EvalConfig {
        runs: 1,
        trials: 500,
        seed,
        ..EvalConfig::default()
    };
    let eval = evaluate(&model as &dyn SequenceModel, "analytic", &judge, &truth, &ds, &cfg).unwrap();
    AnalyticRun {
        report: eval.report,
        predictor_exact: exact(&pred),
        swap_exact: exact(&swap),
    }
}
