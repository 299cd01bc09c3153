//! Latent exploration: locating each factor's latent channels.
//!
//! Two strategies produce a [`FactorMap`]. The predictor strategy fits a
//! boosted classifier per factor on latent vectors and keeps the
//! importance-ranked prefix reaching a cumulative threshold. The swap
//! strategy searches channel subsets whose exchange between samples flips
//! one factor under a judge while leaving the others alone.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FactorKind, FactorSpec};
use crate::error::{Error, Result};
use crate::judges::Judge;
use crate::learners::{Gbt, GbtConfig};
use crate::models::{swap_channels, SequenceModel};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

/// Channel subsets per factor plus the evidence behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorMap {
    pub strategy: String,
    pub latent_dim: usize,
    pub factors: Vec<FactorSpec>,
    /// `None` marks a factor the stage could not locate.
    pub subsets: Vec<Option<Vec<usize>>>,
    /// Per factor, a score per channel summing to 1.
    pub relevance: Vec<Vec<f64>>,
    /// Channels claimed by more than one factor.
    pub overlap: usize,
    /// Per factor: the strongest channel scores below `2 / latent_dim`.
    pub low_confidence: Vec<bool>,
}

impl FactorMap {
    /// Builds a map and fills in the derived overlap count.
    pub fn new(
        strategy: &str,
        latent_dim: usize,
        factors: Vec<FactorSpec>,
        subsets: Vec<Option<Vec<usize>>>,
        relevance: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let low_confidence = relevance
            .iter()
            .map(|row| row.iter().cloned().fold(0.0, f64::max) < 2.0 / latent_dim as f64)
            .collect();
        let mut map = Self {
            strategy: strategy.to_string(),
            latent_dim,
            factors,
            subsets,
            relevance,
            overlap: 0,
            low_confidence,
        };
        map.overlap = map.count_overlap();
        map.validate()?;
        Ok(map)
    }

    /// Ground-truth map for models whose channel `i` encodes factor `i`.
    pub fn identity(factors: Vec<FactorSpec>) -> Self {
        let k = factors.len();
        let relevance = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::new("identity", k, factors, (0..k).map(|i| Some(vec![i])).collect(), relevance)
            .expect("identity map is valid")
    }

    fn count_overlap(&self) -> usize {
        let mut claims = vec![0usize; self.latent_dim];
        for s in self.subsets.iter().flatten() {
            for &d in s {
                if d < self.latent_dim {
                    claims[d] += 1;
                }
            }
        }
        claims.iter().filter(|&&c| c > 1).count()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.factors.len();
        if self.subsets.len() != k || self.relevance.len() != k || self.low_confidence.len() != k {
            return Err(Error::Validation("factor map tables disagree on the number of factors".into()));
        }
        for (f, s) in self.subsets.iter().enumerate() {
            if let Some(s) = s {
                if s.is_empty() {
                    return Err(Error::Validation(format!("factor {} has an empty channel set", self.factors[f].name)));
                }
                if s.iter().any(|&d| d >= self.latent_dim) {
                    return Err(Error::Validation(format!(
                        "factor {} names a channel outside latent_dim {}",
                        self.factors[f].name, self.latent_dim
                    )));
                }
                let mut sorted = s.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != s.len() {
                    return Err(Error::Validation(format!("factor {} repeats a channel", self.factors[f].name)));
                }
            }
        }
        for row in &self.relevance {
            if row.len() != self.latent_dim || row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Validation("relevance rows must hold latent_dim non-negative scores".into()));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation("relevance rows must sum to 1".into()));
            }
        }
        if self.overlap != self.count_overlap() {
            return Err(Error::Validation("overlap count does not match the subsets".into()));
        }
        Ok(())
    }

    pub fn subset(&self, factor: usize) -> Option<&[usize]> {
        self.subsets.get(factor)?.as_deref()
    }

    pub fn is_complete(&self) -> bool {
        self.subsets.iter().all(Option::is_some)
    }

    /// Sorted union of the channel sets of factors of `kind`.
    pub fn group(&self, kind: FactorKind) -> Vec<usize> {
        let mut g: Vec<usize> = self
            .factors
            .iter()
            .zip(&self.subsets)
            .filter(|(f, _)| f.kind == kind)
            .flat_map(|(_, s)| s.iter().flatten().copied())
            .collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    /// Whether both maps assign the same channel sets, ignoring order.
    pub fn same_assignment(&self, other: &Self) -> bool {
        let norm = |m: &Self| -> Vec<Option<Vec<usize>>> {
            m.subsets
                .iter()
                .map(|s| {
                    s.as_ref().map(|s| {
                        let mut s = s.clone();
                        s.sort_unstable();
                        s
                    })
                })
                .collect()
        };
        self.latent_dim == other.latent_dim && norm(self) == norm(other)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: Self = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }
}

fn normalize_row(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.iter_mut().for_each(|v| *v /= total);
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|v| *v = u);
    }
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    /// Cumulative importance each factor's channel set must reach.
    pub tau: f64,
    /// Assign each channel only to the factor ranking it highest.
    pub disjoint: bool,
    pub gbt: GbtConfig,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            disjoint: false,
            gbt: GbtConfig::default(),
            seed: 0,
        }
    }
}

/// Shortest importance-ranked prefix with cumulative importance `>= tau`.
/// Ranking is by importance, then by lower index; zero-importance
/// channels are never taken.
pub fn importance_prefix(importances: &[f64], tau: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importances.len()).filter(|&d| importances[d] > 0.0).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    if tau >= 1.0 {
        return order;
    }
    let mut cum = 0.0;
    let mut out = Vec::new();
    for d in order {
        out.push(d);
        cum += importances[d];
        if cum >= tau - 1e-12 {
            break;
        }
    }
    out
}

/// Predictor strategy on precomputed latent vectors (`n` rows of `l`).
pub fn predictor_les_from_latents(
    latents: &[f32],
    l: usize,
    labels: &[Vec<u32>],
    factors: &[FactorSpec],
    cfg: &PredictorConfig,
) -> Result<FactorMap> {
    if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return Err(Error::Config(format!("tau must lie in (0, 1], got {}", cfg.tau)));
    }
    if l == 0 || latents.len() % l != 0 {
        return Err(Error::Shape(format!("{} latent values do not form rows of {l}", latents.len())));
    }
    let n = latents.len() / l;
    if labels.len() != factors.len() || labels.iter().any(|y| y.len() != n) {
        return Err(Error::Shape("one label column of n rows is needed per factor".into()));
    }
    for (f, y) in factors.iter().zip(labels) {
        if y.iter().all(|&v| v == y[0]) {
            return Err(Error::Degenerate(format!("factor {} takes a single value on this split", f.name)));
        }
    }
    let importances: Vec<Vec<f64>> = (0..factors.len())
        .into_par_iter()
        .map(|f| {
            let gbt_cfg = GbtConfig {
                seed: derive_seed(cfg.seed, &format!("les/predictor/{f}")),
                ..cfg.gbt
            };
            Ok(normalize_row(Gbt::fit(latents, l, &labels[f], &gbt_cfg)?.importances().to_vec()))
        })
        .collect::<Result<_>>()?;
    let subsets = if cfg.disjoint {
        let mut owned: Vec<Vec<usize>> = vec![Vec::new(); factors.len()];
        for d in 0..l {
            let mut best: Option<usize> = None;
            for f in 0..factors.len() {
                if importances[f][d] > 0.0 && best.map_or(true, |b| importances[f][d] > importances[b][d]) {
                    best = Some(f);
                }
            }
            if let Some(f) = best {
                owned[f].push(d);
            }
        }
        owned
            .into_iter()
            .zip(&importances)
            .map(|(dims, imp)| {
                let mut restricted = vec![0.0; l];
                for &d in &dims {
                    restricted[d] = imp[d];
                }
                let total: f64 = restricted.iter().sum();
                if total <= 0.0 {
                    return None;
                }
                restricted.iter_mut().for_each(|v| *v /= total);
                Some(importance_prefix(&restricted, cfg.tau))
            })
            .collect()
    } else {
        importances
            .iter()
            .map(|imp| {
                let s = importance_prefix(imp, cfg.tau);
                (!s.is_empty()).then_some(s)
            })
            .collect()
    };
    FactorMap::new("predictor", l, factors.to_vec(), subsets, importances)
}

/// Predictor strategy on the latent vectors of samples `idx` of `ds`.
pub fn predictor_les(model: &dyn SequenceModel, ds: &Dataset, idx: &[usize], cfg: &PredictorConfig) -> Result<FactorMap> {
    let l = model.latent_dim();
    let rows: Vec<Vec<f32>> = idx
        .par_iter()
        .map(|&i| model.latent_vector(ds.sequence(i)))
        .collect::<Result<_>>()?;
    let latents: Vec<f32> = rows.concat();
    let labels: Vec<Vec<u32>> = (0..ds.num_factors())
        .map(|f| idx.iter().map(|&i| ds.labels(i)[f]).collect())
        .collect();
    predictor_les_from_latents(&latents, l, &labels, ds.factors(), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwapConfig {
    /// Penalty per channel in a candidate subset.
    pub lambda: f64,
    pub pairs: usize,
    /// Judge calls per factor; each candidate costs `pairs` calls.
    pub budget: usize,
    pub seed: u64,
}

impl Default for SwapConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            pairs: 50,
            budget: 2000,
            seed: 0,
        }
    }
}

/// Fraction of pairs whose judged label of each factor changes when the
/// channels in `subset` are copied from the donor.
fn change_rates(
    model: &dyn SequenceModel,
    judge: &dyn Judge,
    tracks: &[(Tensor, Tensor)],
    baseline: &[Vec<u32>],
    subset: &[usize],
) -> Result<Vec<f64>> {
    let k = judge.factors().len();
    let flips: Vec<Vec<bool>> = tracks
        .par_iter()
        .zip(baseline)
        .map(|((a, b), base)| {
            let (swapped, _) = swap_channels(a, b, subset)?;
            let labels = judge.judge_all(&model.decode_channels(&swapped)?)?;
            Ok(labels.iter().zip(base).map(|(x, y)| x != y).collect())
        })
        .collect::<Result<_>>()?;
    let n = flips.len() as f64;
    Ok((0..k).map(|f| flips.iter().filter(|r| r[f]).count() as f64 / n).collect())
}

/// `rates[f] - mean_{g != f} rates[g] - lambda * size`.
pub fn swap_score(rates: &[f64], f: usize, size: usize, lambda: f64) -> f64 {
    let others = if rates.len() > 1 {
        rates.iter().enumerate().filter(|&(g, _)| g != f).map(|(_, r)| r).sum::<f64>() / (rates.len() - 1) as f64
    } else {
        0.0
    };
    rates[f] - others - lambda * size as f64
}

/// Swap strategy: greedy subset search scored by a judge.
///
/// Singletons are evaluated first in index order; afterwards each factor's
/// best subset grows by one channel per round until no factor improves or
/// the budget runs out. Factors whose best score is not positive are left
/// unlocated.
pub fn swap_les(
    model: &dyn SequenceModel,
    ds: &Dataset,
    idx: &[usize],
    judge: &dyn Judge,
    cfg: &SwapConfig,
) -> Result<FactorMap> {
    if cfg.pairs == 0 || idx.len() < 2 {
        return Err(Error::Config("swap exploration needs at least one pair of two distinct samples".into()));
    }
    let l = model.latent_dim();
    let k = judge.factors().len();
    let mut rng = Rng::derived(cfg.seed, "les/swap/pairs");
    let pairs: Vec<(usize, usize)> = (0..cfg.pairs)
        .map(|_| {
            let (a, b) = rng.distinct_pair(idx.len());
            (idx[a], idx[b])
        })
        .collect();
    let tracks: Vec<(Tensor, Tensor)> = pairs
        .par_iter()
        .map(|&(a, b)| Ok((model.channels(ds.sequence(a))?, model.channels(ds.sequence(b))?)))
        .collect::<Result<_>>()?;
    // Labels of the plain reconstructions, so that reconstruction error is
    // not mistaken for a swap effect.
    let baseline: Vec<Vec<u32>> = tracks
        .par_iter()
        .map(|(a, _)| judge.judge_all(&model.decode_channels(a)?))
        .collect::<Result<_>>()?;
    let mut spent = cfg.pairs;
    let mut cache: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    let mut best: Vec<Option<(Vec<usize>, f64)>> = vec![None; k];

    let consider = |subset: Vec<usize>, cache: &mut BTreeMap<Vec<usize>, Vec<f64>>, spent: &mut usize| -> Result<bool> {
        if cache.contains_key(&subset) {
            return Ok(true);
        }
        if *spent + cfg.pairs > cfg.budget {
            return Ok(false);
        }
        *spent += cfg.pairs;
        let rates = change_rates(model, judge, &tracks, &baseline, &subset)?;
        cache.insert(subset, rates);
        Ok(true)
    };
    let update = |best: &mut Vec<Option<(Vec<usize>, f64)>>, subset: &[usize], rates: &[f64]| {
        let mut improved = false;
        for f in 0..k {
            let s = swap_score(rates, f, subset.len(), cfg.lambda);
            if best[f].as_ref().map_or(true, |(_, b)| s > *b) {
                best[f] = Some((subset.to_vec(), s));
                improved = true;
            }
        }
        improved
    };

    let mut singleton_rates: Vec<Option<Vec<f64>>> = vec![None; l];
    for d in 0..l {
        if !consider(vec![d], &mut cache, &mut spent)? {
            break;
        }
        let rates = cache[&vec![d]].clone();
        update(&mut best, &[d], &rates);
        singleton_rates[d] = Some(rates);
    }
    'grow: loop {
        let mut improved = false;
        for f in 0..k {
            let Some((base, _)) = best[f].clone() else { continue };
            for d in 0..l {
                if base.contains(&d) {
                    continue;
                }
                let mut cand = base.clone();
                cand.push(d);
                cand.sort_unstable();
                if !consider(cand.clone(), &mut cache, &mut spent)? {
                    break 'grow;
                }
                let rates = cache[&cand].clone();
                let s = swap_score(&rates, f, cand.len(), cfg.lambda);
                if best[f].as_ref().map_or(true, |(_, b)| s > *b) {
                    best[f] = Some((cand, s));
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let subsets = best
        .iter()
        .map(|b| b.as_ref().filter(|(_, s)| *s > 0.0).map(|(s, _)| s.clone()))
        .collect();
    let relevance = (0..k)
        .map(|f| {
            normalize_row(
                singleton_rates
                    .iter()
                    .map(|r| r.as_ref().map_or(0.0, |r| swap_score(r, f, 1, 0.0).max(0.0)))
                    .collect(),
            )
        })
        .collect();
    FactorMap::new("swap", l, judge.factors().to_vec(), subsets, relevance)
}
