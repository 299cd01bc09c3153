//! Modularity, compactness and explicitness of latent groups.
//!
//! Relevance of group `i` for factor `k` is the held-out accuracy of a
//! boosted classifier reading only that group, normalized against the
//! factor's floor and clipped at zero. Entropies use log base equal to the
//! number of entries they range over.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Gbt, GbtConfig};
use crate::les::FactorMap;
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DciConfig {
    pub gbt: GbtConfig,
    /// Share of samples used for fitting; the rest scores accuracy.
    pub train_fraction: f64,
}

impl Default for DciConfig {
    fn default() -> Self {
        Self {
            gbt: GbtConfig::default(),
            train_fraction: 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciResult {
    pub modularity: f64,
    pub compactness: f64,
    pub explicitness: f64,
    /// Relevance, one row per located factor's group, one column per factor.
    pub relevance: Vec<Vec<f64>>,
    /// Factors whose groups form the rows of `relevance`.
    pub groups: Vec<usize>,
    /// Held-out accuracy per factor from the full latent vector.
    pub full_accuracy: Vec<f64>,
    /// Every relevance entry was zero.
    pub degenerate: bool,
}

fn normalized_entropy(p: &[f64]) -> f64 {
    if p.len() < 2 {
        return 0.0;
    }
    let total: f64 = p.iter().sum();
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let q = v / total;
            -q * q.ln()
        })
        .sum();
    h / (p.len() as f64).ln()
}

fn mass_weighted(rows: &[Vec<f64>]) -> f64 {
    let masses: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let total: f64 = masses.iter().sum();
    rows.iter()
        .zip(&masses)
        .filter(|(_, &m)| m > 0.0)
        .map(|(r, &m)| m / total * (1.0 - normalized_entropy(r)))
        .sum()
}

/// Modularity, compactness and explicitness from a relevance matrix
/// (`groups × factors`) and per-factor explicitness scores.
pub fn dci_from_relevance(q: &[Vec<f64>], explicitness: &[f64]) -> Result<(f64, f64, f64, bool)> {
    let m = q.first().map_or(0, Vec::len);
    if q.is_empty() || m == 0 || q.iter().any(|r| r.len() != m) {
        return Err(Error::Shape("relevance matrix must be rectangular and nonempty".into()));
    }
    if q.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation("relevance entries must be finite and non-negative".into()));
    }
    let e = if explicitness.is_empty() {
        0.0
    } else {
        explicitness.iter().map(|v| v.clamp(0.0, 1.0)).sum::<f64>() / explicitness.len() as f64
    };
    if q.iter().flatten().all(|&v| v == 0.0) {
        return Ok((0.0, 0.0, e, true));
    }
    let columns: Vec<Vec<f64>> = (0..m).map(|k| q.iter().map(|r| r[k]).collect()).collect();
    Ok((mass_weighted(q), mass_weighted(&columns), e, false))
}

fn normalized_accuracy(acc: f64, floor: f64) -> f64 {
    ((acc - floor) / (1.0 - floor)).max(0.0)
}

/// Fits on the leading `train_fraction` of a seeded permutation and scores
/// accuracy on the rest.
fn held_out_accuracy(
    latents: &[f32],
    l: usize,
    cols: &[usize],
    y: &[u32],
    order: &[usize],
    n_train: usize,
    cfg: &GbtConfig,
) -> Result<f64> {
    let gather = |rows: &[usize]| -> Vec<f32> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            out.extend(cols.iter().map(|&c| latents[r * l + c]));
        }
        out
    };
    let (train, test) = order.split_at(n_train);
    let ytr: Vec<u32> = train.iter().map(|&i| y[i]).collect();
    let yte: Vec<u32> = test.iter().map(|&i| y[i]).collect();
    let gbt = Gbt::fit(&gather(train), cols.len(), &ytr, cfg)?;
    gbt.accuracy(&gather(test), &yte)
}

/// DCI triple for latent vectors (`n` rows of `l`) grouped by `map`.
pub fn dci(
    latents: &[f32],
    l: usize,
    labels: &[Vec<u32>],
    map: &FactorMap,
    floors: &[f64],
    cfg: &DciConfig,
    seed: u64,
) -> Result<DciResult> {
    let m = map.factors.len();
    if m < 2 {
        return Err(Error::Validation("DCI needs at least two factors".into()));
    }
    if l == 0 || latents.len() % l != 0 || l != map.latent_dim {
        return Err(Error::Shape(format!(
            "{} latent values do not form rows of the map's latent_dim {}",
            latents.len(),
            map.latent_dim
        )));
    }
    let n = latents.len() / l;
    if labels.len() != m || labels.iter().any(|y| y.len() != n) || floors.len() != m {
        return Err(Error::Shape("one label column and one floor per factor are needed".into()));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
    }
    let n_train = (n as f64 * cfg.train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Degenerate(format!("{n} samples cannot be split for DCI")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derived(seed, "dci/split").shuffle(&mut order);

    let groups: Vec<usize> = (0..m).filter(|&f| map.subset(f).is_some()).collect();
    let all: Vec<usize> = (0..l).collect();
    // Seeds depend on the group's channels and the factor's name, not on
    // positions, so that reordering factors only reorders the matrix.
    let gbt_for = |cols: &[usize], k: usize| GbtConfig {
        seed: derive_seed(seed, &format!("dci/{cols:?}/{}", map.factors[k].name)),
        ..cfg.gbt
    };
    let relevance: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|&g| {
            let cols = map.subset(g).expect("located");
            (0..m)
                .map(|k| {
                    let acc = held_out_accuracy(latents, l, cols, &labels[k], &order, n_train, &gbt_for(cols, k))?;
                    Ok(normalized_accuracy(acc, floors[k]))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let full_accuracy: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|k| held_out_accuracy(latents, l, &all, &labels[k], &order, n_train, &gbt_for(&all, k)))
        .collect::<Result<_>>()?;
    let explicit: Vec<f64> = full_accuracy
        .iter()
        .zip(floors)
        .map(|(&a, &f)| normalized_accuracy(a, f).min(1.0))
        .collect();
    let (modularity, compactness, explicitness, degenerate) = if groups.is_empty() {
        (0.0, 0.0, explicit.iter().sum::<f64>() / m as f64, true)
    } else {
        dci_from_relevance(&relevance, &explicit)?
    };
    Ok(DciResult {
        modularity,
        compactness,
        explicitness,
        relevance,
        groups,
        full_accuracy,
        degenerate,
    })
}
