//! End-to-end evaluation: model and judge construction, exploration,
//! repeated metric runs, and report files.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generator_for, Dataset, Enumeration};
use crate::error::{Error, Result};
use crate::judges::{Judge, OracleJudge, RemoteJudge, TrainedJudge};
use crate::les::{predictor_les, swap_les, FactorMap, PredictorConfig, SwapConfig};
use crate::metrics::{
    c_swap, dci, empirical_floor, leaderboard, m_gsample, m_swap, noise_floor, two_gsample, two_swap,
    valid_metrics, AccuracyMatrix, DciConfig, DciResult, EvalContext, FloorMode, GeneratedConsistency,
    Leaderboard, Metric, MetricReport, SummaryMode, TrialStats,
};
use crate::models::{load_checkpoint, AnalyticModel, LatentBank, SequenceModel};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum JudgeSpec {
    Oracle,
    Trained,
    Remote { endpoint: String },
}

/// Builds a judge for `ds`. Oracle judges need a dataset that records its
/// generator; trained judges fit on the training split.
pub fn build_judge(spec: &JudgeSpec, ds: &Dataset, seed: u64) -> Result<Arc<dyn Judge>> {
    Ok(match spec {
        JudgeSpec::Oracle => Arc::new(OracleJudge::new(Arc::new(enumerate(ds)?))),
        JudgeSpec::Trained => Arc::new(TrainedJudge::fit(ds, derive_seed(seed, "judge"))?),
        JudgeSpec::Remote { endpoint } => Arc::new(RemoteJudge::new(
            endpoint,
            ds.factors().to_vec(),
            ds.seq_len(),
            ds.manifest.frame_shape.clone(),
        )),
    })
}

/// Clean renders of every configuration of the dataset's generator.
pub fn enumerate(ds: &Dataset) -> Result<Enumeration> {
    let gen = generator_for(&ds.manifest)?;
    Ok(Enumeration::new(gen.as_ref()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSource {
    /// The label-index reference model of the dataset's generator.
    Analytic,
    Checkpoint { path: std::path::PathBuf },
}

pub fn load_model(source: &ModelSource, ds: &Dataset) -> Result<(Box<dyn SequenceModel>, String)> {
    match source {
        ModelSource::Analytic => Ok((Box::new(AnalyticModel::new(Arc::new(enumerate(ds)?))), "analytic".into())),
        ModelSource::Checkpoint { path } => {
            let (model, manifest) = load_checkpoint(path)?;
            if model.geometry.seq_len != ds.seq_len() || model.geometry.frame_len != ds.frame_len() {
                return Err(Error::Validation(format!(
                    "checkpoint expects sequences of {}×{} but the dataset holds {}×{}",
                    model.geometry.seq_len,
                    model.geometry.frame_len,
                    ds.seq_len(),
                    ds.frame_len()
                )));
            }
            Ok((Box::new(model), manifest.spec.kind().name().to_string()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesStrategy {
    Predictor,
    Swap,
}

impl LesStrategy {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "predictor" => Ok(Self::Predictor),
            "swap" => Ok(Self::Swap),
            other => Err(Error::Config(format!("unknown exploration strategy {other}"))),
        }
    }
}

/// Runs exploration on the training split.
pub fn explore(
    model: &dyn SequenceModel,
    ds: &Dataset,
    strategy: LesStrategy,
    judge: Option<&dyn Judge>,
    seed: u64,
) -> Result<FactorMap> {
    let train = ds.split("train")?;
    match strategy {
        LesStrategy::Predictor => {
            let cfg = PredictorConfig {
                seed: derive_seed(seed, "les/predictor"),
                ..PredictorConfig::default()
            };
            predictor_les(model, ds, &train, &cfg)
        }
        LesStrategy::Swap => {
            let judge = judge.ok_or_else(|| Error::Config("swap exploration needs a judge".into()))?;
            let cfg = SwapConfig {
                seed: derive_seed(seed, "les/swap"),
                ..SwapConfig::default()
            };
            swap_les(model, ds, &train, judge, &cfg)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// `None` runs every metric valid for the dataset.
    pub metrics: Option<Vec<Metric>>,
    pub runs: usize,
    /// Trials per frozen factor for M-Swap and M-GSample.
    pub trials: usize,
    /// Pairs for 2-Swap and C-Swap, and samples for 2-GSample.
    pub pairs: usize,
    pub floor_mode: FloorMode,
    pub summary: SummaryMode,
    pub dci: DciConfig,
    pub max_failure_rate: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: None,
            runs: 5,
            trials: 500,
            pairs: 500,
            floor_mode: FloorMode::Uniform,
            summary: SummaryMode::Mean,
            dci: DciConfig::default(),
            max_failure_rate: 0.1,
            seed: 0,
        }
    }
}

/// Everything one evaluation run measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDetails {
    pub run: usize,
    pub seed: u64,
    pub values: Vec<(Metric, f64)>,
    pub m_swap: Option<AccuracyMatrix>,
    pub m_gsample: Option<AccuracyMatrix>,
    pub generated: Option<GeneratedConsistency>,
    pub c_swap: Option<Vec<(usize, f64)>>,
    pub dci: Option<DciResult>,
    pub trials: Vec<(String, TrialStats)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricReport,
    pub factor_map: FactorMap,
    pub floors: Vec<f64>,
    pub invalid_samples: usize,
    pub runs: Vec<RunDetails>,
}

fn floors_for(ds: &Dataset, idx: &[usize], mode: FloorMode) -> Result<Vec<f64>> {
    ds.factors()
        .iter()
        .enumerate()
        .map(|(f, spec)| match mode {
            FloorMode::Uniform => noise_floor(spec.cardinality()),
            FloorMode::Empirical => {
                let labels: Vec<u32> = idx.iter().map(|&i| ds.labels(i)[f]).collect();
                empirical_floor(&labels, spec.cardinality())
            }
        })
        .collect()
}

/// Resolves the metric list against what the dataset supports.
pub fn metric_set(ds: &Dataset, requested: Option<&[Metric]>) -> Result<Vec<Metric>> {
    let valid = valid_metrics(ds.manifest.modality, ds.factors());
    match requested {
        None => Ok(valid),
        Some(req) => {
            if req.is_empty() {
                return Err(Error::Config("the metric set is empty".into()));
            }
            if let Some(bad) = req.iter().find(|m| !valid.contains(m)) {
                return Err(Error::Config(format!(
                    "metric {} is not defined for dataset {}",
                    bad.name(),
                    ds.manifest.name
                )));
            }
            Ok(Metric::ALL.into_iter().filter(|m| req.contains(m)).collect())
        }
    }
}

/// Runs every requested metric `cfg.runs` times with seeds derived from
/// `cfg.seed` and aggregates the runs into a report.
///
/// Intervention metrics draw sources and donors from the test split and
/// resample from a bank built on the training split. DCI reads the latent
/// vectors of the whole dataset and splits them internally.
pub fn evaluate(
    model: &dyn SequenceModel,
    model_name: &str,
    judge: &dyn Judge,
    map: &FactorMap,
    ds: &Dataset,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    if cfg.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    if !(cfg.max_failure_rate >= 0.0 && cfg.max_failure_rate <= 1.0) {
        return Err(Error::Config("max_failure_rate must lie in [0, 1]".into()));
    }
    let metrics = metric_set(ds, cfg.metrics.as_deref())?;
    let test = ds.split("test")?;
    let floors = floors_for(ds, &test, cfg.floor_mode)?;
    let needs = |f: fn(Metric) -> bool| metrics.iter().any(|&m| f(m));
    let interventions = needs(|m| !m.is_dci());

    let train = ds.split("train")?;
    let bank = if interventions && !model.is_variational() {
        let samples: Vec<&[f32]> = train.iter().map(|&i| ds.sequence(i)).collect();
        LatentBank::build(model, &samples)
    } else {
        LatentBank::default()
    };
    let ctx = if interventions {
        let mut c = EvalContext::new(model, judge, map, ds, &test, &bank, floors.clone())?;
        c.max_failure_rate = cfg.max_failure_rate;
        Some(c)
    } else {
        None
    };

    let dci_inputs = if needs(Metric::is_dci) {
        let all: Vec<usize> = (0..ds.len()).collect();
        let rows: Vec<Vec<f32>> = all
            .par_iter()
            .map(|&i| model.latent_vector(ds.sequence(i)))
            .collect::<Result<_>>()?;
        let labels: Vec<Vec<u32>> = (0..ds.num_factors())
            .map(|f| all.iter().map(|&i| ds.labels(i)[f]).collect())
            .collect();
        Some((rows.concat(), labels))
    } else {
        None
    };

    let mut details = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let seed = derive_seed(cfg.seed, &format!("eval/run/{run}"));
        let mut d = RunDetails {
            run,
            seed,
            values: Vec::new(),
            m_swap: None,
            m_gsample: None,
            generated: None,
            c_swap: None,
            dci: None,
            trials: Vec::new(),
        };
        if let Some(ctx) = &ctx {
            let want = |m: Metric| metrics.contains(&m);
            if want(Metric::MSwap) {
                let (a, s) = m_swap(ctx, cfg.trials, derive_seed(seed, "m-swap"))?;
                d.trials.push(("m-swap".into(), s));
                d.m_swap = Some(a);
            }
            if want(Metric::TwoSwap) {
                let (v, s) = two_swap(ctx, cfg.pairs, derive_seed(seed, "two-swap"))?;
                d.trials.push(("two-swap".into(), s));
                d.values.push((Metric::TwoSwap, v));
            }
            if want(Metric::MGSample) || want(Metric::CSample) || want(Metric::GcSample) {
                let frames = want(Metric::CSample) || want(Metric::GcSample);
                let (a, g, s) = m_gsample(ctx, cfg.trials, derive_seed(seed, "m-gsample"), frames)?;
                d.trials.push(("m-gsample".into(), s));
                d.m_gsample = Some(a);
                d.generated = g;
            }
            if want(Metric::TwoGSample) {
                let (v, s) = two_gsample(ctx, cfg.pairs, derive_seed(seed, "two-gsample"))?;
                d.trials.push(("two-gsample".into(), s));
                d.values.push((Metric::TwoGSample, v));
            }
            if want(Metric::CSwap) {
                let (v, s) = c_swap(ctx, cfg.pairs, derive_seed(seed, "c-swap"))?;
                d.trials.push(("c-swap".into(), s));
                d.c_swap = Some(v);
            }
        }
        if let Some((latents, labels)) = &dci_inputs {
            d.dci = Some(dci(
                latents,
                model.latent_dim(),
                labels,
                map,
                &floors,
                &cfg.dci,
                derive_seed(seed, "dci"),
            )?);
        }
        let mut values = Vec::with_capacity(metrics.len());
        for &m in &metrics {
            let v = match m {
                Metric::MSwap => d.m_swap.as_ref().expect("computed").summarize(cfg.summary)?,
                Metric::MGSample => d.m_gsample.as_ref().expect("computed").summarize(cfg.summary)?,
                Metric::DciM => d.dci.as_ref().expect("computed").modularity,
                Metric::DciC => d.dci.as_ref().expect("computed").compactness,
                Metric::DciE => d.dci.as_ref().expect("computed").explicitness,
                Metric::CSwap => {
                    let c = d.c_swap.as_ref().expect("computed");
                    c.iter().map(|x| x.1).sum::<f64>() / c.len() as f64
                }
                Metric::CSample => d.generated.as_ref().expect("computed").c_sample_mean(),
                Metric::GcSample => d.generated.as_ref().expect("computed").gc_sample_mean(),
                Metric::TwoSwap | Metric::TwoGSample => {
                    d.values.iter().find(|v| v.0 == m).expect("computed").1
                }
            };
            values.push((m, v.clamp(0.0, 1.0)));
        }
        d.values = values;
        details.push(d);
    }
    let runs: Vec<Vec<f64>> = details.iter().map(|d| d.values.iter().map(|v| v.1).collect()).collect();
    let report = MetricReport::from_runs(model_name, &ds.manifest.name, &metrics, &runs)?;
    Ok(Evaluation {
        report,
        factor_map: map.clone(),
        floors,
        invalid_samples: ctx.as_ref().map_or(0, |c| c.invalid_samples),
        runs: details,
    })
}

/// Writes `report.json`, `metrics.csv`, `runs.json`, `factor_map.json` and
/// a one-report `leaderboard.md` into `dir`.
pub fn write_evaluation(eval: &Evaluation, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&eval.report)?)?;
    fs::write(dir.join("metrics.csv"), eval.report.to_csv())?;
    let raw = serde_json::json!({
        "floors": eval.floors,
        "invalid_samples": eval.invalid_samples,
        "runs": eval.runs,
    });
    fs::write(dir.join("runs.json"), serde_json::to_string_pretty(&raw)?)?;
    fs::write(dir.join("factor_map.json"), eval.factor_map.to_json()?)?;
    fs::write(dir.join("leaderboard.md"), leaderboard(std::slice::from_ref(&eval.report))?.to_markdown())?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<MetricReport> {
    let report: MetricReport = serde_json::from_str(&fs::read_to_string(path)?)?;
    report.verify()?;
    Ok(report)
}

/// Merges report files into `leaderboard.{json,csv,md}` under `dir`.
pub fn write_leaderboard(reports: &[MetricReport], dir: &Path) -> Result<Leaderboard> {
    let board = leaderboard(reports)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("leaderboard.json"), serde_json::to_string_pretty(&board)?)?;
    fs::write(dir.join("leaderboard.csv"), board.to_csv())?;
    fs::write(dir.join("leaderboard.md"), board.to_markdown())?;
    Ok(board)
}
