mod common;

use std::sync::Arc;

use common::end_to_end::analytic_run;
use msd_core::data::{generate, Enumeration, Generator, Shapes2D16, Ts24};
use msd_core::judges::OracleJudge;
use msd_core::les::FactorMap;
use msd_core::metrics::{Metric, MetricReport};
use msd_core::models::{AnalyticModel, ModelKind, ModelSpec, NeuralModel};
use msd_core::pipeline::{evaluate, explore, metric_set, write_leaderboard, EvalConfig, LesStrategy};
use msd_core::training::geometry_of;
use msd_core::Error;
use serde_json::json;

#[test]
fn analytic_model_scores_near_the_ceiling() {
    let run = analytic_run(1);
    assert!(run.predictor_exact && run.swap_exact);
    assert!(common::end_to_end::value(&run.report, "M-Swap") >= 0.98);
    assert!(run.dci().iter().all(|&v| v >= 0.99), "{:?}", run.dci());
    assert_eq!(run.consistency(), [1.0; 3]);
}

#[test]
fn swap_exploration_requires_a_judge() {
    let gen = Shapes2D16::new();
    let ds = generate(&gen, 0, [0.7, 0.15, 0.15]).unwrap();
    let model = AnalyticModel::new(Arc::new(Enumeration::new(&gen)));
    assert!(matches!(explore(&model, &ds, LesStrategy::Swap, None, 0), Err(Error::Config(_))));
}

#[test]
fn time_series_run_dci_only() {
    let ds = generate(&Ts24::new(0, 0.05).unwrap(), 0, [0.7, 0.15, 0.15]).unwrap();
    let metrics = metric_set(&ds, None).unwrap();
    assert_eq!(metrics.len(), 3);
    assert!(metrics.iter().all(|m| m.is_dci()));

    let spec = ModelSpec::from_parts(ModelKind::Ae, json!({"latent_dim": 6, "hidden_dims": [32]})).unwrap();
    let model = NeuralModel::new(spec, geometry_of(&ds), 0).unwrap();
    let map = explore(&model, &ds, LesStrategy::Predictor, None, 0).unwrap();
    // The judge is never consulted when only DCI runs.
    let gen = Shapes2D16::new();
    let judge = OracleJudge::new(Arc::new(Enumeration::new(&gen)));
    let cfg = EvalConfig { runs: 2, ..EvalConfig::default() };
    let eval = evaluate(&model, "ae", &judge, &map, &ds, &cfg).unwrap();
    assert_eq!(eval.report.values.len(), 3);
    assert!(eval.report.values.iter().all(|v| (0.0..=1.0).contains(&v.mean) && v.runs.len() == 2));
}

#[test]
fn leaderboard_collects_models_and_datasets() {
    let report = |model: &str, dataset: &str, v: f64| {
        MetricReport::from_values(model, dataset, &[(Metric::parse("DCI-M").unwrap(), v), (Metric::parse("DCI-E").unwrap(), 1.0)]).unwrap()
    };
    let reports = [report("a", "x", 0.2), report("b", "x", 0.6), report("a", "y", 0.4)];
    let dir = tempfile::tempdir().unwrap();
    let board = write_leaderboard(&reports, dir.path()).unwrap();
    assert_eq!(board.models, ["a", "b"]);
    assert_eq!(board.datasets, ["x", "y"]);
    assert_eq!(board.score("b", "y"), None);
    assert!((board.score("a", "x").unwrap() - 0.6).abs() < 1e-12);
    for f in ["leaderboard.json", "leaderboard.csv", "leaderboard.md"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn factor_map_survives_json() {
    let gen = Shapes2D16::new();
    let map = FactorMap::identity(gen.factors().to_vec());
    assert_eq!(FactorMap::from_json(&map.to_json().unwrap()).unwrap(), map);
}
