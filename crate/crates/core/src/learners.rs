//! Gradient-boosted regression trees with a softmax read-out.
//!
//! Each boosting round fits one depth-limited tree per class to the
//! softmax residuals, with Newton leaf values. Features are binned once
//! into at most `bins` quantile thresholds; split search is exhaustive
//! over those thresholds, and ties go to the lowest feature index and then
//! the lowest threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub bins: usize,
    /// Share of features offered to each tree, drawn with `seed`.
    pub feature_fraction: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            bins: 64,
            feature_fraction: 1.0,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl GbtConfig {
    /// Caps the features per tree at `max_features` for wide inputs.
    pub fn with_feature_cap(mut self, n_features: usize, max_features: usize) -> Self {
        self.feature_fraction = (max_features as f64 / n_features.max(1) as f64).min(1.0);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.bins < 2 || self.min_samples_leaf == 0 {
            return Err(Error::Config("gbt needs max_depth >= 1, bins >= 2, min_samples_leaf >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::Config("gbt learning_rate must be > 0 and feature_fraction in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f32]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if (row[feature] as f64) <= threshold { left } else { right },
            }
        }
    }
}

/// A fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    n_features: usize,
    classes: Vec<u32>,
    base: Vec<f64>,
    learning_rate: f64,
    /// `rounds[r][c]` is round `r`'s tree for class `c`.
    rounds: Vec<Vec<Tree>>,
    importances: Vec<f64>,
    train_loss: Vec<f64>,
}

/// Per-feature thresholds and the bin index of every training value.
struct Binned {
    thresholds: Vec<Vec<f64>>,
    /// Column-major bin indices: `bins[f * n + i]`.
    bins: Vec<u8>,
    n: usize,
}

fn bin_features(x: &[f32], n: usize, d: usize, max_bins: usize) -> Binned {
    let mut thresholds = Vec::with_capacity(d);
    let mut bins = vec![0u8; n * d];
    let mut col = Vec::with_capacity(n);
    for f in 0..d {
        col.clear();
        col.extend((0..n).map(|i| x[i * d + f] as f64));
        let mut u = col.clone();
        u.sort_by(|a, b| a.total_cmp(b));
        u.dedup();
        let th: Vec<f64> = if u.len() <= max_bins {
            u.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut th: Vec<f64> = (1..max_bins)
                .map(|k| {
                    let j = k * u.len() / max_bins;
                    0.5 * (u[j - 1] + u[j])
                })
                .collect();
            th.dedup();
            th
        };
        for (i, &v) in col.iter().enumerate() {
            bins[f * n + i] = th.partition_point(|&t| t < v) as u8;
        }
        thresholds.push(th);
    }
    Binned { thresholds, bins, n }
}

struct TreeBuilder<'a> {
    binned: &'a Binned,
    features: &'a [usize],
    grad: &'a [f64],
    hess: &'a [f64],
    leaf_scale: f64,
    max_depth: usize,
    min_leaf: usize,
    gains: &'a mut [f64],
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        if h <= 1e-12 {
            0.0
        } else {
            self.leaf_scale * g / h
        }
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf(self.leaf_value(&rows)));
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return id;
        }
        let n_rows = rows.len() as f64;
        let total: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let parent = total * total / n_rows;
        // (gain, feature, threshold index)
        let mut best: Option<(f64, usize, usize)> = None;
        let mut sums = Vec::new();
        let mut counts = Vec::new();
        for &f in self.features {
            let th = &self.binned.thresholds[f];
            if th.is_empty() {
                continue;
            }
            let nb = th.len() + 1;
            sums.clear();
            sums.resize(nb, 0.0f64);
            counts.clear();
            counts.resize(nb, 0usize);
            let col = &self.binned.bins[f * self.binned.n..(f + 1) * self.binned.n];
            for &i in &rows {
                let b = col[i] as usize;
                sums[b] += self.grad[i];
                counts[b] += 1;
            }
            let (mut sl, mut cl) = (0.0, 0usize);
            for j in 0..th.len() {
                sl += sums[j];
                cl += counts[j];
                let cr = rows.len() - cl;
                if cl < self.min_leaf || cr < self.min_leaf {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / cl as f64 + sr * sr / cr as f64 - parent;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, j));
                }
            }
        }
        let Some((gain, f, j)) = best else { return id };
        self.gains[f] += gain;
        let col = &self.binned.bins[f * self.binned.n..(f + 1) * self.binned.n];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] as usize <= j);
        let left = self.build(left_rows, depth + 1, nodes);
        let right = self.build(right_rows, depth + 1, nodes);
        nodes[id] = Node::Split {
            feature: f,
            threshold: self.binned.thresholds[f][j],
            left,
            right,
        };
        id
    }
}

fn softmax(scores: &[f64], out: &mut [f64]) {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - m).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

impl Gbt {
    /// Fits on `x` (`n × d`, row-major) with labels `y`.
    pub fn fit(x: &[f32], d: usize, y: &[u32], cfg: &GbtConfig) -> Result<Self> {
        cfg.validate()?;
        let n = y.len();
        if d == 0 || x.len() != n * d {
            return Err(Error::Shape(format!("gbt: {} values for {n} rows of {d} features", x.len())));
        }
        if n < 2 {
            return Err(Error::Degenerate("gbt needs at least two samples".into()));
        }
        if let Some(p) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gbt input value {p}")));
        }
        let mut classes: Vec<u32> = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Degenerate(format!("gbt labels hold a single class ({})", classes[0])));
        }
        let k = classes.len();
        let target: Vec<usize> = y.iter().map(|l| classes.binary_search(l).expect("present")).collect();
        let mut counts = vec![0usize; k];
        target.iter().for_each(|&c| counts[c] += 1);
        let base: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
        let binned = bin_features(x, n, d, cfg.bins.min(256));
        let mut scores: Vec<f64> = (0..n).flat_map(|_| base.iter().cloned()).collect();
        let mut probs = vec![0.0; n * k];
        let mut gains = vec![0.0; d];
        let mut rng = Rng::derived(cfg.seed, "gbt/features");
        let n_feat = ((cfg.feature_fraction * d as f64).ceil() as usize).clamp(1, d);
        let leaf_scale = (k as f64 - 1.0) / k as f64;
        let mut rounds = Vec::with_capacity(cfg.n_trees);
        let mut train_loss = Vec::with_capacity(cfg.n_trees + 1);
        let log_loss = |scores: &[f64], probs: &mut [f64]| -> f64 {
            let mut l = 0.0;
            for i in 0..n {
                softmax(&scores[i * k..(i + 1) * k], &mut probs[i * k..(i + 1) * k]);
                l -= probs[i * k + target[i]].max(1e-300).ln();
            }
            l / n as f64
        };
        train_loss.push(log_loss(&scores, &mut probs));
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..cfg.n_trees {
            let features: Vec<usize> = if n_feat == d {
                (0..d).collect()
            } else {
                let mut all: Vec<usize> = (0..d).collect();
                rng.shuffle(&mut all);
                let mut pick = all[..n_feat].to_vec();
                pick.sort_unstable();
                pick
            };
            let mut trees = Vec::with_capacity(k);
            for c in 0..k {
                for i in 0..n {
                    let p = probs[i * k + c];
                    let r = f64::from(u8::from(target[i] == c)) - p;
                    grad[i] = r;
                    hess[i] = r.abs() * (1.0 - r.abs());
                }
                let mut builder = TreeBuilder {
                    binned: &binned,
                    features: &features,
                    grad: &grad,
                    hess: &hess,
                    leaf_scale,
                    max_depth: cfg.max_depth,
                    min_leaf: cfg.min_samples_leaf,
                    gains: &mut gains,
                };
                let mut nodes = Vec::new();
                builder.build((0..n).collect(), 0, &mut nodes);
                trees.push(Tree { nodes });
            }
            for i in 0..n {
                let row = &x[i * d..(i + 1) * d];
                for (c, t) in trees.iter().enumerate() {
                    scores[i * k + c] += cfg.learning_rate * t.predict(row);
                }
            }
            rounds.push(trees);
            train_loss.push(log_loss(&scores, &mut probs));
        }
        let total: f64 = gains.iter().sum();
        let importances = if total > 0.0 {
            gains.iter().map(|g| g / total).collect()
        } else {
            vec![1.0 / d as f64; d]
        };
        Ok(Self {
            n_features: d,
            classes,
            base,
            learning_rate: cfg.learning_rate,
            rounds,
            importances,
            train_loss,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    /// Normalized cumulative split gain per feature; uniform if the
    /// ensemble never split.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    /// Mean training log-loss before boosting and after every round.
    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    pub fn predict_proba(&self, row: &[f32]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::Shape(format!(
                "gbt expects {} features, got {}",
                self.n_features,
                row.len()
            )));
        }
        let mut scores = self.base.clone();
        for trees in &self.rounds {
            for (s, t) in scores.iter_mut().zip(trees) {
                *s += self.learning_rate * t.predict(row);
            }
        }
        let mut p = vec![0.0; scores.len()];
        softmax(&scores, &mut p);
        Ok(p)
    }

    /// Most probable label; ties go to the lowest label.
    pub fn predict(&self, row: &[f32]) -> Result<u32> {
        let p = self.predict_proba(row)?;
        let mut best = 0;
        for (c, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = c;
            }
        }
        Ok(self.classes[best])
    }

    /// Share of rows of `x` whose prediction equals `y`.
    pub fn accuracy(&self, x: &[f32], y: &[u32]) -> Result<f64> {
        let d = self.n_features;
        if x.len() != y.len() * d || y.is_empty() {
            return Err(Error::Shape("gbt accuracy: rows and labels disagree".into()));
        }
        let mut hits = 0usize;
        for (row, &label) in x.chunks(d).zip(y) {
            hits += usize::from(self.predict(row)? == label);
        }
        Ok(hits as f64 / y.len() as f64)
    }
}
