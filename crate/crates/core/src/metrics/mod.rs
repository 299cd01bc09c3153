//! Disentanglement metrics, their summaries, and aggregation.

mod dci;
mod interventions;
mod report;

use serde::{Deserialize, Serialize};

use crate::data::{FactorKind, FactorSpec, Modality};
use crate::error::{Error, Result};

pub use dci::{dci, dci_from_relevance, DciConfig, DciResult};
pub use interventions::{
    c_swap, m_gsample, m_swap, two_gsample, two_swap, EvalContext, GeneratedConsistency, TrialStats,
};
pub use report::{aggregate, leaderboard, standard_error, Leaderboard, MetricReport, MetricValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "M-Swap")]
    MSwap,
    #[serde(rename = "2-Swap")]
    TwoSwap,
    #[serde(rename = "M-GSample")]
    MGSample,
    #[serde(rename = "2-GSample")]
    TwoGSample,
    #[serde(rename = "DCI-M")]
    DciM,
    #[serde(rename = "DCI-C")]
    DciC,
    #[serde(rename = "DCI-E")]
    DciE,
    #[serde(rename = "C-Swap")]
    CSwap,
    #[serde(rename = "C-Sample")]
    CSample,
    #[serde(rename = "GC-Sample")]
    GcSample,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::MSwap,
        Metric::TwoSwap,
        Metric::MGSample,
        Metric::TwoGSample,
        Metric::DciM,
        Metric::DciC,
        Metric::DciE,
        Metric::CSwap,
        Metric::CSample,
        Metric::GcSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MSwap => "M-Swap",
            Metric::TwoSwap => "2-Swap",
            Metric::MGSample => "M-GSample",
            Metric::TwoGSample => "2-GSample",
            Metric::DciM => "DCI-M",
            Metric::DciC => "DCI-C",
            Metric::DciE => "DCI-E",
            Metric::CSwap => "C-Swap",
            Metric::CSample => "C-Sample",
            Metric::GcSample => "GC-Sample",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("unknown metric {name}")))
    }

    pub fn is_dci(self) -> bool {
        matches!(self, Metric::DciM | Metric::DciC | Metric::DciE)
    }

    pub fn needs_static(self) -> bool {
        matches!(self, Metric::CSwap | Metric::CSample | Metric::GcSample)
    }

    pub fn needs_static_and_dynamic(self) -> bool {
        matches!(self, Metric::TwoSwap | Metric::TwoGSample)
    }
}

/// Metrics that are defined for a dataset of this modality and factor set.
/// Time series only get the DCI triple.
pub fn valid_metrics(modality: Modality, factors: &[FactorSpec]) -> Vec<Metric> {
    let has = |k: FactorKind| factors.iter().any(|f| f.kind == k);
    let (stat, dynamic) = (has(FactorKind::Static), has(FactorKind::Dynamic));
    Metric::ALL
        .into_iter()
        .filter(|m| match modality {
            Modality::Timeseries => m.is_dci(),
            Modality::Video => {
                (!m.needs_static() || stat) && (!m.needs_static_and_dynamic() || (stat && dynamic))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloorMode {
    /// `1 / n` for an `n`-class factor.
    #[default]
    Uniform,
    /// Majority-class frequency on the evaluation samples.
    Empirical,
}

/// Chance accuracy `1 / n` for an `n`-class factor.
pub fn noise_floor(cardinality: usize) -> Result<f64> {
    if cardinality < 2 {
        return Err(Error::Validation(format!(
            "a noise floor needs at least two classes, got {cardinality}"
        )));
    }
    Ok(1.0 / cardinality as f64)
}

/// Majority-class frequency of `labels`.
pub fn empirical_floor(labels: &[u32], cardinality: usize) -> Result<f64> {
    noise_floor(cardinality)?;
    if labels.is_empty() {
        return Err(Error::Validation("empirical floor of an empty label set".into()));
    }
    let mut counts = vec![0usize; cardinality];
    for &l in labels {
        *counts
            .get_mut(l as usize)
            .ok_or_else(|| Error::Validation(format!("label {l} outside {cardinality} classes")))? += 1;
    }
    let floor = *counts.iter().max().expect("nonempty") as f64 / labels.len() as f64;
    if floor >= 1.0 {
        return Err(Error::Degenerate("every evaluation sample has the same label".into()));
    }
    Ok(floor)
}

/// Share of adjacent frames with equal labels.
pub fn c_sample(labels: &[u32]) -> Result<f64> {
    if labels.len() < 2 {
        return Err(Error::Validation("c_sample needs at least two frames".into()));
    }
    let same = labels.windows(2).filter(|w| w[0] == w[1]).count();
    Ok(same as f64 / (labels.len() - 1) as f64)
}

/// Frequency of the most common label; ties go to the lowest label.
pub fn gc_sample(labels: &[u32]) -> Result<f64> {
    Ok(modal_label(labels)?.1 as f64 / labels.len() as f64)
}

/// The most common label and its count, preferring the lowest label.
pub fn modal_label(labels: &[u32]) -> Result<(u32, usize)> {
    if labels.is_empty() {
        return Err(Error::Validation("modal label of an empty sequence".into()));
    }
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    let mut best = (sorted[0], 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        if j > best.1 {
            best = (sorted[i], j);
        }
        i += j;
    }
    Ok(best)
}

/// Share of frames showing the donor's label.
pub fn c_swap_sequence(frame_labels: &[u32], donor: u32) -> Result<f64> {
    if frame_labels.is_empty() {
        return Err(Error::Validation("c_swap needs at least one frame".into()));
    }
    Ok(frame_labels.iter().filter(|&&l| l == donor).count() as f64 / frame_labels.len() as f64)
}

/// Accuracy of every judged factor (columns) with each factor frozen (rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub values: Vec<Vec<f64>>,
    pub floors: Vec<f64>,
    /// Trials that entered each row.
    pub trials: Vec<usize>,
    /// Some channels belong to more than one factor and stayed frozen.
    pub overlap_warning: bool,
}

impl AccuracyMatrix {
    pub fn new(values: Vec<Vec<f64>>, floors: Vec<f64>) -> Result<Self> {
        let k = values.len();
        let m = Self {
            trials: vec![0; k],
            values,
            floors,
            overlap_warning: false,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.values.len();
        if k == 0 || self.floors.len() != k || self.values.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("accuracy matrix must be square with {k} floors")));
        }
        if self.values.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation("accuracies must lie in [0, 1]".into()));
        }
        if self.floors.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Validation("noise floors must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn summarize(&self, mode: SummaryMode) -> Result<f64> {
        summarize_matrix(&self.values, &self.floors, mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SummaryMode {
    /// Equal-weight arithmetic mean of the diagonal and off-diagonal terms.
    Mean,
    /// Weighted geometric mean of the same two terms.
    Geometric { diagonal_weight: f64, off_diagonal_weight: f64 },
}

impl Default for SummaryMode {
    fn default() -> Self {
        SummaryMode::Mean
    }
}

impl SummaryMode {
    pub fn geometric() -> Self {
        SummaryMode::Geometric {
            diagonal_weight: 0.5,
            off_diagonal_weight: 0.5,
        }
    }
}

/// Diagonal accuracy mean and the mean closeness of off-diagonal entries
/// to their floors, `1 - min(1, |a - floor| / (1 - floor))`.
pub fn matrix_terms(a: &[Vec<f64>], floors: &[f64]) -> Result<(f64, Option<f64>)> {
    let k = a.len();
    if k == 0 || floors.len() != k || a.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("summarize_matrix needs a square matrix and one floor per column".into()));
    }
    if floors.iter().any(|&f| f >= 1.0 || !(f > 0.0)) {
        return Err(Error::Validation("noise floors must lie in (0, 1)".into()));
    }
    let diag = (0..k).map(|i| a[i][i]).sum::<f64>() / k as f64;
    if k == 1 {
        return Ok((diag, None));
    }
    let mut off = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                off += 1.0 - ((a[i][j] - floors[j]).abs() / (1.0 - floors[j])).min(1.0);
            }
        }
    }
    Ok((diag, Some(off / (k * (k - 1)) as f64)))
}

/// One score for an accuracy matrix. A single-factor matrix scores its
/// diagonal entry.
pub fn summarize_matrix(a: &[Vec<f64>], floors: &[f64], mode: SummaryMode) -> Result<f64> {
    let (diag, off) = matrix_terms(a, floors)?;
    let Some(off) = off else { return Ok(diag) };
    match mode {
        SummaryMode::Mean => Ok(0.5 * diag + 0.5 * off),
        SummaryMode::Geometric {
            diagonal_weight: wd,
            off_diagonal_weight: wo,
        } => {
            if !(wd >= 0.0 && wo >= 0.0 && wd + wo > 0.0) {
                return Err(Error::Config("geometric summary weights must be non-negative and not both zero".into()));
            }
            if diag <= 0.0 || off <= 0.0 {
                return Ok(0.0);
            }
            Ok(((wd * diag.ln() + wo * off.ln()) / (wd + wo)).exp())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floors() {
        assert_eq!(noise_floor(4).unwrap(), 0.25);
        assert_eq!(noise_floor(2).unwrap(), 0.5);
        assert!(noise_floor(1).is_err());
        assert_eq!(empirical_floor(&[0, 0, 0, 1], 2).unwrap(), 0.75);
        assert!(empirical_floor(&[1, 1], 2).is_err());
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(c_sample(&[2, 2, 2]).unwrap(), 1.0);
        assert!((c_sample(&[0, 0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c_sample(&[0, 1, 0, 1]).unwrap(), 0.0);
        assert!(c_sample(&[0]).is_err());
        assert_eq!(gc_sample(&[0, 0, 1, 0]).unwrap(), 0.75);
        assert_eq!(modal_label(&[1, 0]).unwrap(), (0, 1));
        assert_eq!(gc_sample(&[1, 0]).unwrap(), 0.5);
        assert_eq!(c_swap_sequence(&[3, 1, 3, 2], 3).unwrap(), 0.5);
    }

    #[test]
    fn summary_examples() {
        let m = SummaryMode::Mean;
        assert_eq!(summarize_matrix(&[vec![1.0, 0.25], vec![0.25, 1.0]], &[0.25, 0.25], m).unwrap(), 1.0);
        assert_eq!(summarize_matrix(&[vec![0.5, 1.0], vec![1.0, 0.5]], &[0.5, 0.5], m).unwrap(), 0.25);
        assert_eq!(summarize_matrix(&[vec![0.7]], &[0.5], m).unwrap(), 0.7);
        assert!(summarize_matrix(&[vec![0.7]], &[1.0], m).is_err());
        let g = summarize_matrix(&[vec![1.0, 0.25], vec![0.25, 0.64]], &[0.25, 0.25], SummaryMode::geometric()).unwrap();
        assert!((g - (0.82f64 * 1.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn metric_names_roundtrip() {
        for m in Metric::ALL {
            assert_eq!(Metric::parse(m.name()).unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
    }

    #[test]
    fn time_series_get_dci_only() {
        let f = vec![
            FactorSpec::new("a", FactorKind::Static, &["x", "y"]),
            FactorSpec::new("b", FactorKind::Dynamic, &["x", "y"]),
        ];
        assert_eq!(valid_metrics(Modality::Timeseries, &f), vec![Metric::DciM, Metric::DciC, Metric::DciE]);
        assert_eq!(valid_metrics(Modality::Video, &f).len(), 10);
        assert_eq!(valid_metrics(Modality::Video, &f[1..]).len(), 5);
    }
}
