//! Byte-level determinism and container roundtrip checks.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use msd_core::data::{generate, read_container, write_container, Dataset, Enumeration, Shapes2D16, Ts24};
use msd_core::judges::OracleJudge;
use msd_core::les::FactorMap;
use msd_core::models::{AnalyticModel, ModelKind, ModelSpec};
use msd_core::pipeline::{evaluate, write_evaluation, EvalConfig};
use msd_core::training::{train_on, TrainingConfig};
use serde_json::json;

const SPLITS: [f64; 3] = [0.7, 0.15, 0.15];

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names
        .iter()
        .all(|n| fs::read(a.join(n)).ok().is_some_and(|x| Some(x) == fs::read(b.join(n)).ok()))
}

fn roundtrips(ds: &Dataset) -> bool {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_container(ds, a.path()).unwrap();
    let back = read_container(a.path()).unwrap();
    write_container(&back, b.path()).unwrap();
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    bits(back.raw_data()) == bits(ds.raw_data())
        && back.raw_labels() == ds.raw_labels()
        && same_files(a.path(), b.path(), &["manifest.json", "data.bin", "labels.bin"])
}

/// Every written container reads back bit for bit and rewrites to the
/// same bytes.
pub fn container_roundtrip() -> bool {
    let shapes = generate(&Shapes2D16::new(), 1, SPLITS).unwrap();
    let ts = generate(&Ts24::new(1, 0.05).unwrap(), 1, SPLITS).unwrap();
    roundtrips(&shapes) && roundtrips(&ts)
}

/// Same seed gives identical container bytes; another seed does not.
pub fn datasets_are_deterministic() -> bool {
    let write = |seed: u64| {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&Ts24::new(seed, 0.05).unwrap(), seed, SPLITS).unwrap();
        write_container(&ds, dir.path()).unwrap();
        dir
    };
    let (a, b, c) = (write(7), write(7), write(8));
    let files = ["manifest.json", "data.bin", "labels.bin"];
    same_files(a.path(), b.path(), &files) && !same_files(a.path(), c.path(), &files[1..2])
}

/// Two short training runs with one seed leave identical checkpoints.
pub fn checkpoints_are_deterministic() -> bool {
    let ds = generate(&Ts24::new(2, 0.05).unwrap(), 2, SPLITS).unwrap();
    let spec = ModelSpec::from_parts(ModelKind::Skd, json!({"k_dim": 6, "static_size": 2, "hidden_dim": 32})).unwrap();
    let mut cfg = TrainingConfig::new(spec, "unused");
    cfg.epochs = 2;
    cfg.seed = 3;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train_on(&cfg, &ds, a.path()).unwrap();
    train_on(&cfg, &ds, b.path()).unwrap();
    same_files(
        a.path(),
        b.path(),
        &["checkpoint/manifest.json", "checkpoint/params.bin", "checkpoint/koopman.bin", "train_log.tsv"],
    )
}

/// Two evaluations of one model with one seed write identical reports.
pub fn reports_are_deterministic() -> bool {
    let gen = Shapes2D16::new();
    let ds = generate(&gen, 4, SPLITS).unwrap();
    let enumeration = Arc::new(Enumeration::new(&gen));
    let model = AnalyticModel::new(enumeration.clone());
    let judge = OracleJudge::new(enumeration);
    let map = FactorMap::identity(ds.factors().to_vec());
    let cfg = EvalConfig {
        runs: 2,
        trials: 40,
        pairs: 40,
        seed: 9,
        ..EvalConfig::default()
    };
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let eval = evaluate(&model, "analytic", &judge, &map, &ds, &cfg).unwrap();
        write_evaluation(&eval, dir.path()).unwrap();
        dir
    };
    let (a, b) = (run(), run());
    same_files(
        a.path(),
        b.path(),
        &["report.json", "metrics.csv", "runs.json", "factor_map.json", "leaderboard.md"],
    )
}
