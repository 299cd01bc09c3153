//! Per-run metric values, their aggregation, and leaderboards.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Metric;

/// Arithmetic mean; an empty set is an error.
pub fn aggregate(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Validation("cannot aggregate an empty metric set".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Standard error of the mean with the `n - 1` variance; zero for one run.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricValue {
    pub metric: Metric,
    pub mean: f64,
    pub se: f64,
    pub runs: Vec<f64>,
}

/// Scores of one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub model: String,
    pub dataset: String,
    pub values: Vec<MetricValue>,
    /// Mean of the metric means.
    pub score: f64,
    /// Standard error of the per-run means over runs.
    pub score_se: f64,
}

impl MetricReport {
    /// `runs[r][i]` is run `r`'s value of `metrics[i]`.
    pub fn from_runs(model: &str, dataset: &str, metrics: &[Metric], runs: &[Vec<f64>]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Validation("a report needs at least one run".into()));
        }
        if runs.iter().any(|r| r.len() != metrics.len()) {
            return Err(Error::Shape("every run must report every metric".into()));
        }
        let unique: BTreeSet<_> = metrics.iter().collect();
        if unique.len() != metrics.len() {
            return Err(Error::Validation("a metric appears twice in one report".into()));
        }
        if runs.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation("metric values must lie in [0, 1]".into()));
        }
        let values: Vec<MetricValue> = metrics
            .iter()
            .enumerate()
            .map(|(i, &metric)| {
                let xs: Vec<f64> = runs.iter().map(|r| r[i]).collect();
                MetricValue {
                    metric,
                    mean: xs.iter().sum::<f64>() / xs.len() as f64,
                    se: standard_error(&xs),
                    runs: xs,
                }
            })
            .collect();
        let score = aggregate(&values.iter().map(|v| v.mean).collect::<Vec<_>>())?;
        let per_run: Vec<f64> = runs.iter().map(|r| aggregate(r)).collect::<Result<_>>()?;
        Ok(Self {
            model: model.to_string(),
            dataset: dataset.to_string(),
            values,
            score,
            score_se: standard_error(&per_run),
        })
    }

    /// A single-run report.
    pub fn from_values(model: &str, dataset: &str, values: &[(Metric, f64)]) -> Result<Self> {
        let metrics: Vec<Metric> = values.iter().map(|v| v.0).collect();
        Self::from_runs(model, dataset, &metrics, &[values.iter().map(|v| v.1).collect()])
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values.iter().find(|v| v.metric == metric).map(|v| v.mean)
    }

    /// Checks that the stored score is the mean of the stored values.
    pub fn verify(&self) -> Result<()> {
        let s = aggregate(&self.values.iter().map(|v| v.mean).collect::<Vec<_>>())?;
        if (s - self.score).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "report score {} does not match its values ({s})",
                self.score
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,dataset,metric,mean,se,runs\n");
        for v in &self.values {
            let runs: Vec<String> = v.runs.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.model,
                self.dataset,
                v.metric.name(),
                v.mean,
                v.se,
                runs.join(";")
            );
        }
        let _ = writeln!(out, "{},{},S,{},{},", self.model, self.dataset, self.score, self.score_se);
        out
    }
}

/// Reports merged into per-dataset summaries and per-metric means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    /// Models in first-seen order.
    pub models: Vec<String>,
    /// Datasets in first-seen order.
    pub datasets: Vec<String>,
    /// `summary[d][m]`: the aggregated score of model `m` on dataset `d`.
    pub summary: Vec<Vec<Option<f64>>>,
    pub metrics: Vec<Metric>,
    /// `per_metric[k][m]`: mean of metric `k` over the datasets where it
    /// was reported for model `m`.
    pub per_metric: Vec<Vec<Option<f64>>>,
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items {
        if !out.iter().any(|o| o == i) {
            out.push(i.to_string());
        }
    }
    out
}

/// Merges reports; two reports for the same (model, dataset) are an error.
pub fn leaderboard(reports: &[MetricReport]) -> Result<Leaderboard> {
    if reports.is_empty() {
        return Err(Error::Validation("a leaderboard needs at least one report".into()));
    }
    let mut seen = BTreeSet::new();
    for r in reports {
        if !seen.insert((r.model.as_str(), r.dataset.as_str())) {
            return Err(Error::Validation(format!(
                "duplicate report for model {} on dataset {}",
                r.model, r.dataset
            )));
        }
    }
    let models = first_seen(reports.iter().map(|r| r.model.as_str()));
    let datasets = first_seen(reports.iter().map(|r| r.dataset.as_str()));
    let find = |m: &str, d: &str| reports.iter().find(|r| r.model == m && r.dataset == d);
    let summary = datasets
        .iter()
        .map(|d| models.iter().map(|m| find(m, d).map(|r| r.score)).collect())
        .collect();
    let metrics: Vec<Metric> = Metric::ALL
        .into_iter()
        .filter(|k| reports.iter().any(|r| r.get(*k).is_some()))
        .collect();
    let per_metric = metrics
        .iter()
        .map(|&k| {
            models
                .iter()
                .map(|m| {
                    let xs: Vec<f64> = reports.iter().filter(|r| &r.model == m).filter_map(|r| r.get(k)).collect();
                    aggregate(&xs).ok()
                })
                .collect()
        })
        .collect();
    Ok(Leaderboard {
        models,
        datasets,
        summary,
        metrics,
        per_metric,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

impl Leaderboard {
    pub fn score(&self, model: &str, dataset: &str) -> Option<f64> {
        let m = self.models.iter().position(|x| x == model)?;
        let d = self.datasets.iter().position(|x| x == dataset)?;
        self.summary[d][m]
    }

    pub fn metric_score(&self, model: &str, metric: Metric) -> Option<f64> {
        let m = self.models.iter().position(|x| x == model)?;
        let k = self.metrics.iter().position(|x| *x == metric)?;
        self.per_metric[k][m]
    }

    /// Two Markdown tables: datasets by models, then metrics by models.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let header = |first: &str| {
            let mut h = format!("| {first} |");
            for m in &self.models {
                let _ = write!(h, " {m} |");
            }
            h.push('\n');
            h.push_str(&"|---".repeat(self.models.len() + 1));
            h.push_str("|\n");
            h
        };
        out.push_str(&header("Dataset"));
        for (d, row) in self.datasets.iter().zip(&self.summary) {
            let _ = write!(out, "| {d} |");
            for v in row {
                let _ = write!(out, " {} |", cell(*v));
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&header("Metric"));
        for (k, row) in self.metrics.iter().zip(&self.per_metric) {
            let _ = write!(out, "| {} |", k.name());
            for v in row {
                let _ = write!(out, " {} |", cell(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,row,model,value\n");
        for (d, row) in self.datasets.iter().zip(&self.summary) {
            for (m, v) in self.models.iter().zip(row) {
                if let Some(v) = v {
                    let _ = writeln!(out, "summary,{d},{m},{v}");
                }
            }
        }
        for (k, row) in self.metrics.iter().zip(&self.per_metric) {
            for (m, v) in self.models.iter().zip(row) {
                if let Some(v) = v {
                    let _ = writeln!(out, "metric,{},{m},{v}", k.name());
                }
            }
        }
        out
    }
}
