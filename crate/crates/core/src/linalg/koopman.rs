//! Koopman matrix fitting, static/dynamic mode classification, the
//! spectral penalty and eigenspace projectors.
//!
//! States are row vectors: a latent trajectory `Z` (T×K) advances as
//! `Z[t+1] = Z[t]·𝒦`, and projecting onto a set of modes is `Z·P_S`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig, lstsq, Eigen, Mat};

/// How closeness of an eigenvalue to the static regime is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StaticMode {
    /// `|λ − 1|`
    Ball,
    /// `||λ| − 1|`
    Norm,
}

impl StaticMode {
    pub fn distance(self, lambda: Complex64) -> f64 {
        match self {
            StaticMode::Ball => (lambda - Complex64::new(1.0, 0.0)).norm(),
            StaticMode::Norm => (lambda.norm() - 1.0).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub k_dim: usize,
    pub static_size: usize,
    pub static_mode: StaticMode,
    pub dynamic_thresh: f64,
    pub w_rec: f64,
    pub w_pred: f64,
    pub w_eigs: f64,
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.static_size < 1 || self.static_size >= self.k_dim {
            return Err(Error::Config(format!(
                "static_size must be in [1, k_dim), got {} with k_dim {}",
                self.static_size, self.k_dim
            )));
        }
        if !(self.dynamic_thresh > 0.0 && self.dynamic_thresh < 1.0) {
            return Err(Error::Config(format!(
                "dynamic_thresh must lie in (0, 1), got {}",
                self.dynamic_thresh
            )));
        }
        for (name, w) in [("w_rec", self.w_rec), ("w_pred", self.w_pred), ("w_eigs", self.w_eigs)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Least-squares `𝒦` from the consecutive-state pairs of every sequence.
pub fn fit_batch(z: &[Mat]) -> Result<Mat> {
    let first = z
        .first()
        .ok_or_else(|| Error::Shape("Koopman fit needs at least one sequence".into()))?;
    let k = first.cols();
    let mut past = Vec::new();
    let mut future = Vec::new();
    let mut rows = 0;
    for zi in z {
        if zi.cols() != k {
            return Err(Error::Shape("sequences disagree on latent width".into()));
        }
        let t = zi.rows();
        if t < 2 {
            return Err(Error::Shape(format!("Koopman fit needs T >= 2, got {t}")));
        }
        past.extend_from_slice(&zi.data()[..(t - 1) * k]);
        future.extend_from_slice(&zi.data()[k..]);
        rows += t - 1;
    }
    lstsq(&Mat::from_vec(rows, k, past)?, &Mat::from_vec(rows, k, future)?)
}

/// Minimum-norm least-squares `𝒦_i` of one sequence.
pub fn fit_instance(z: &Mat) -> Result<Mat> {
    fit_batch(std::slice::from_ref(z))
}

/// `‖Z[1:] − Z[:-1]·𝒦‖²_F`.
pub fn prediction_residual(z: &Mat, k: &Mat) -> Result<f64> {
    let t = z.rows();
    if t < 2 {
        return Ok(0.0);
    }
    let pred = z.slice_rows(0, t - 1).matmul(k)?;
    Ok(pred.sub(&z.slice_rows(1, t))?.frobenius().powi(2))
}

/// Real eigenvalues and conjugate pairs as index groups, in index order.
/// Pairs must be adjacent (as produced by [`eig`]).
pub fn mode_groups(values: &[Complex64]) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut j = 0;
    while j < values.len() {
        let l = values[j];
        if l.im != 0.0 && j + 1 < values.len() {
            let tol = 1e-12 * l.norm().max(1.0);
            if (values[j + 1] - l.conj()).norm() <= tol {
                groups.push(vec![j, j + 1]);
                j += 2;
                continue;
            }
        }
        groups.push(vec![j]);
        j += 1;
    }
    groups
}

/// Tags the `static_size` groups closest to the static regime as static
/// (a conjugate pair counts as one group); the rest are dynamic.
pub fn classify_modes(values: &[Complex64], static_size: usize, mode: StaticMode) -> Result<Vec<ModeKind>> {
    if static_size >= values.len() {
        return Err(Error::Config(format!(
            "static_size {static_size} must be smaller than the number of modes {}",
            values.len()
        )));
    }
    let groups = mode_groups(values);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let dist = |g: &Vec<usize>| mode.distance(values[g[0]]);
    order.sort_by(|&a, &b| dist(&groups[a]).total_cmp(&dist(&groups[b])).then(a.cmp(&b)));
    let mut labels = vec![ModeKind::Dynamic; values.len()];
    for &g in order.iter().take(static_size) {
        for &j in &groups[g] {
            labels[j] = ModeKind::Static;
        }
    }
    Ok(labels)
}

/// Penalty contribution of one eigenvalue and its partial derivatives with
/// respect to the real and imaginary parts.
fn mode_penalty(lambda: Complex64, kind: ModeKind, dynamic_thresh: f64) -> (f64, f64, f64) {
    match kind {
        ModeKind::Static => {
            let dx = lambda.re - 1.0;
            let dy = lambda.im;
            (dx * dx + dy * dy, 2.0 * dx, 2.0 * dy)
        }
        ModeKind::Dynamic => {
            let m = lambda.norm();
            let excess = m - (1.0 - dynamic_thresh);
            if excess <= 0.0 || m == 0.0 {
                (0.0, 0.0, 0.0)
            } else {
                let c = 2.0 * excess / m;
                (excess * excess, c * lambda.re, c * lambda.im)
            }
        }
    }
}

/// `Σ_static |λ−1|² + Σ_dynamic max(0, |λ| − (1 − thresh))²`.
pub fn spectral_loss(values: &[Complex64], labels: &[ModeKind], dynamic_thresh: f64) -> f64 {
    values
        .iter()
        .zip(labels)
        .map(|(&l, &k)| mode_penalty(l, k, dynamic_thresh).0)
        .sum()
}

/// The spectral penalty together with its gradient with respect to the
/// entries of `𝒦`, using first-order eigenvalue perturbation
/// `dλ = wᵀ d𝒦 v` with the current eigenvectors held fixed.
pub fn spectral_loss_grad(
    k: &Mat,
    eigen: &Eigen,
    labels: &[ModeKind],
    dynamic_thresh: f64,
) -> Result<(f64, Mat)> {
    let n = k.rows();
    let mut grad = Mat::zeros(n, n);
    let mut loss = 0.0;
    let clusters = eigen.clusters(cluster_tol(k));
    let mut isolated = vec![false; n];
    for c in &clusters {
        if c.len() == 1 {
            isolated[c[0]] = true;
        }
    }
    for j in 0..n {
        let (l, gx, gy) = mode_penalty(eigen.values[j], labels[j], dynamic_thresh);
        loss += l;
        if gx == 0.0 && gy == 0.0 {
            continue;
        }
        let w = if isolated[j] {
            match eigen.left_vector(k, j) {
                Ok(w) => Some(w),
                Err(_) => inverse_row(eigen, j),
            }
        } else if !eigen.is_ill_conditioned() {
            inverse_row(eigen, j)
        } else {
            None
        };
        let Some(w) = w else { continue };
        let v = eigen.vector(j);
        let coef = Complex64::new(gx, -gy);
        for a in 0..n {
            let cw = coef * w[a];
            for b in 0..n {
                grad[(a, b)] += (cw * v[b]).re;
            }
        }
    }
    Ok((loss, grad))
}

fn inverse_row(eigen: &Eigen, j: usize) -> Option<Vec<Complex64>> {
    eigen.inverse().ok().map(|inv| inv.row(j).to_vec())
}

fn cluster_tol(k: &Mat) -> f64 {
    1e-10 * k.frobenius().max(1.0)
}

/// Real spectral projector onto the modes in `subset` (expanded to whole
/// clusters of numerically equal eigenvalues). `subset` must be closed
/// under conjugation.
pub fn projector(k: &Mat, eigen: &Eigen, subset: &[usize]) -> Result<Mat> {
    let n = k.rows();
    if subset.is_empty() {
        return Err(Error::Validation("projector needs a non-empty mode set".into()));
    }
    let mut chosen = vec![false; n];
    for &j in subset {
        if j >= n {
            return Err(Error::Validation(format!("mode index {j} out of range")));
        }
        chosen[j] = true;
    }
    for group in mode_groups(&eigen.values) {
        if group.len() == 2 && chosen[group[0]] != chosen[group[1]] {
            return Err(Error::Validation(format!(
                "mode set is not closed under conjugation (modes {} and {})",
                group[0], group[1]
            )));
        }
    }
    let clusters = eigen.clusters(cluster_tol(k));
    for c in &clusters {
        if c.iter().any(|&j| chosen[j]) {
            c.iter().for_each(|&j| chosen[j] = true);
        }
    }
    if chosen.iter().all(|&c| c) {
        return Ok(Mat::identity(n));
    }
    let in_set: Vec<&Vec<usize>> = clusters.iter().filter(|c| chosen[c[0]]).collect();
    let out_set: Vec<&Vec<usize>> = clusters.iter().filter(|c| !chosen[c[0]]).collect();
    if in_set.iter().all(|c| c.len() == 1) {
        let idx: Vec<usize> = in_set.iter().map(|c| c[0]).collect();
        if let Ok(p) = rank_one_sum(k, eigen, &idx) {
            return Ok(p);
        }
    }
    if out_set.iter().all(|c| c.len() == 1) {
        let idx: Vec<usize> = out_set.iter().map(|c| c[0]).collect();
        if let Ok(p) = rank_one_sum(k, eigen, &idx) {
            return Mat::identity(n).sub(&p);
        }
    }
    let inv = eigen.inverse()?;
    let idx: Vec<usize> = (0..n).filter(|&j| chosen[j]).collect();
    let mut p = Mat::zeros(n, n);
    let mut worst_im: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for &j in &idx {
                acc += eigen.vectors[(a, j)] * inv[(j, b)];
            }
            p[(a, b)] = acc.re;
            worst_im = worst_im.max(acc.im.abs());
        }
    }
    check_imaginary(worst_im, &p)?;
    Ok(p)
}

/// `Re Σ_j v_j w_jᵀ` over isolated modes `idx`. Conjugate partners reuse
/// the conjugated left vector so the imaginary parts cancel exactly.
fn rank_one_sum(k: &Mat, eigen: &Eigen, idx: &[usize]) -> Result<Mat> {
    let n = k.rows();
    let mut p = Mat::zeros(n, n);
    let mut worst_im: f64 = 0.0;
    let groups = mode_groups(&eigen.values);
    let mut partner = vec![None; n];
    for g in &groups {
        if g.len() == 2 {
            partner[g[0]] = Some(g[1]);
            partner[g[1]] = Some(g[0]);
        }
    }
    let mut done = vec![false; n];
    for &j in idx {
        if done[j] {
            continue;
        }
        let w = eigen.left_vector(k, j)?;
        let v = eigen.vector(j);
        let paired = partner[j].filter(|q| idx.contains(q));
        let factor = if paired.is_some() { 2.0 } else { 1.0 };
        for a in 0..n {
            for b in 0..n {
                let c = v[a] * w[b];
                p[(a, b)] += factor * c.re;
                if paired.is_none() {
                    worst_im = worst_im.max(c.im.abs());
                }
            }
        }
        done[j] = true;
        if let Some(q) = paired {
            done[q] = true;
        }
    }
    check_imaginary(worst_im, &p)?;
    Ok(p)
}

fn check_imaginary(worst_im: f64, p: &Mat) -> Result<()> {
    if worst_im > 1e-6 * p.frobenius().max(1.0) {
        return Err(Error::Linalg(format!(
            "projector has imaginary part {worst_im:e}"
        )));
    }
    Ok(())
}

/// `Z·P`.
pub fn project(z: &Mat, p: &Mat) -> Result<Mat> {
    z.matmul(p)
}

/// A fitted Koopman matrix with its eigendecomposition and mode labels.
#[derive(Debug, Clone)]
pub struct KoopmanDecomposition {
    pub matrix: Mat,
    pub eigen: Eigen,
    pub labels: Vec<ModeKind>,
}

impl KoopmanDecomposition {
    pub fn new(matrix: Mat, static_size: usize, mode: StaticMode) -> Result<Self> {
        let eigen = eig(&matrix)?;
        let labels = classify_modes(&eigen.values, static_size, mode)?;
        Ok(Self {
            matrix,
            eigen,
            labels,
        })
    }

    pub fn indices(&self, kind: ModeKind) -> Vec<usize> {
        (0..self.labels.len()).filter(|&j| self.labels[j] == kind).collect()
    }

    /// `(P_static, P_dynamic)` with `P_dynamic = I − P_static`.
    pub fn projectors(&self) -> Result<(Mat, Mat)> {
        let n = self.matrix.rows();
        let ps = projector(&self.matrix, &self.eigen, &self.indices(ModeKind::Static))?;
        let pd = Mat::identity(n).sub(&ps)?;
        Ok((ps, pd))
    }

    pub fn spectral_loss(&self, dynamic_thresh: f64) -> f64 {
        spectral_loss(&self.eigen.values, &self.labels, dynamic_thresh)
    }

    pub fn spectral_loss_grad(&self, dynamic_thresh: f64) -> Result<(f64, Mat)> {
        spectral_loss_grad(&self.matrix, &self.eigen, &self.labels, dynamic_thresh)
    }
}
