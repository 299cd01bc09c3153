//! Dense nonsymmetric eigensolver: Householder reduction to upper
//! Hessenberg form followed by Francis double-shift QR and
//! back-substitution for the eigenvectors (the classic EISPACK
//! `orthes`/`hqr2` pair).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, ComplexLu, Mat};

/// Condition estimate of `V` above which the eigenbasis is considered
/// near-singular.
pub const ILL_CONDITIONED: f64 = 1e12;

const MAX_ITER_PER_ROOT: usize = 100;

/// Eigenvalues sorted by descending modulus (ties: descending real part,
/// then descending imaginary part) with unit-norm right eigenvectors as
/// the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: CMat,
    inverse: Option<CMat>,
    /// `‖V‖₁·‖V⁻¹‖₁`, infinite when `V` is singular.
    pub condition: f64,
}

impl Eigen {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `V⁻¹`, unavailable when the eigenvector matrix is exactly singular.
    pub fn inverse(&self) -> Result<&CMat> {
        self.inverse
            .as_ref()
            .ok_or_else(|| Error::Linalg("eigenvector matrix is singular".into()))
    }

    pub fn is_ill_conditioned(&self) -> bool {
        !(self.condition <= ILL_CONDITIONED)
    }

    pub fn vector(&self, j: usize) -> Vec<Complex64> {
        self.vectors.column(j)
    }

    /// Groups of mode indices whose eigenvalues lie within `tol` of each
    /// other (transitively). Groups are ordered by their lowest index.
    pub fn clusters(&self, tol: f64) -> Vec<Vec<usize>> {
        let n = self.values.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for a in 0..n {
            for b in a + 1..n {
                if (self.values[a] - self.values[b]).norm() < tol {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(i);
        }
        groups
    }

    /// Left eigenvector `w` of `m` for mode `j`, scaled so that `wᵀ v_j = 1`
    /// (plain transpose, no conjugation). Computed by inverse iteration on
    /// `mᵀ` with a slightly perturbed shift.
    pub fn left_vector(&self, m: &Mat, j: usize) -> Result<Vec<Complex64>> {
        let n = m.rows();
        let lambda = self.values[j];
        let scale = m.frobenius().max(1.0);
        let mut shifted = m.transpose().to_complex();
        let mu = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
        for i in 0..n {
            shifted[(i, i)] -= mu;
        }
        let lu = ComplexLu::new(&shifted)?;
        if lu.is_singular() {
            return Err(Error::Linalg("inverse iteration hit an exact pole".into()));
        }
        let mut w: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64))
            .collect();
        for _ in 0..3 {
            w = lu.solve(&w)?;
            let norm = w.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::Linalg("inverse iteration diverged".into()));
            }
            w.iter_mut().for_each(|x| *x /= norm);
        }
        let v = self.vector(j);
        let dot: Complex64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        if dot.norm() < 1e-14 {
            return Err(Error::Linalg(format!(
                "left and right eigenvectors of mode {j} are orthogonal"
            )));
        }
        Ok(w.into_iter().map(|x| x / dot).collect())
    }
}

/// Full eigendecomposition of a real square matrix.
pub fn eig(m: &Mat) -> Result<Eigen> {
    let n = m.rows();
    if n == 0 || m.cols() != n {
        return Err(Error::Shape(format!(
            "eig needs a non-empty square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("eig input".into()));
    }
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let mut v = vec![vec![0.0; n]; n];
    orthes(&mut h, &mut v);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    hqr2(&mut h, &mut v, &mut d, &mut e)?;

    // Assemble complex eigenpairs.
    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(n);
    let mut j = 0;
    while j < n {
        if e[j] == 0.0 {
            let vec = (0..n).map(|i| Complex64::new(v[i][j], 0.0)).collect();
            pairs.push((Complex64::new(d[j], 0.0), vec));
            j += 1;
        } else {
            let lam = Complex64::new(d[j], e[j]);
            let vec: Vec<Complex64> = (0..n).map(|i| Complex64::new(v[i][j], v[i][j + 1])).collect();
            let conj: Vec<Complex64> = vec.iter().map(Complex64::conj).collect();
            pairs.push((lam, vec));
            pairs.push((lam.conj(), conj));
            j += 2;
        }
    }
    for (_, vec) in pairs.iter_mut() {
        normalize(vec);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (pairs[a].0, pairs[b].0);
        lb.norm()
            .total_cmp(&la.norm())
            .then(lb.re.total_cmp(&la.re))
            .then(lb.im.total_cmp(&la.im))
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        values.push(pairs[k].0);
        for i in 0..n {
            vectors[(i, col)] = pairs[k].1[i];
        }
    }
    let lu = ComplexLu::new(&vectors)?;
    let (inverse, condition) = if lu.is_singular() {
        (None, f64::INFINITY)
    } else {
        let inv = lu.inverse()?;
        let c = vectors.norm1() * inv.norm1();
        if c.is_finite() {
            (Some(inv), c)
        } else {
            (None, f64::INFINITY)
        }
    };
    Ok(Eigen {
        values,
        vectors,
        inverse,
        condition,
    })
}

/// Unit 2-norm with the largest-modulus entry (lowest index on ties) made
/// real and positive.
fn normalize(v: &mut [Complex64]) {
    let norm = v.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let phase = v[best].conj() / v[best].norm();
    for x in v.iter_mut() {
        *x = *x * phase / norm;
    }
}

/// Householder reduction to Hessenberg form; accumulates the transform in `v`.
fn orthes(h: &mut [Vec<f64>], v: &mut [Vec<f64>]) {
    let n = h.len();
    let (low, high) = (0usize, n - 1);
    let mut ort = vec![0.0; n];
    for m in low + 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[i][j];
            }
            f /= hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut().take(high + 1) {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * row[j];
            }
            f /= hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
    }
    for (i, row) in v.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j { 1.0 } else { 0.0 };
        }
    }
    if high < 2 {
        return;
    }
    for m in (low + 1..high).rev() {
        if h[m][m - 1] == 0.0 {
            continue;
        }
        for i in m + 1..=high {
            ort[i] = h[i][m - 1];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * v[i][j];
            }
            g = (g / ort[m]) / h[m][m - 1];
            for i in m..=high {
                v[i][j] += g * ort[i];
            }
        }
    }
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

/// Francis double-shift QR on the Hessenberg matrix `h`, followed by
/// back-substitution of the eigenvectors into `v`. On return `d + i·e`
/// holds the eigenvalues; complex pairs occupy adjacent slots with the
/// positive imaginary part first, and their eigenvector is
/// `v[:, j] + i·v[:, j+1]`.
#[allow(clippy::many_single_char_names)]
fn hqr2(h: &mut [Vec<f64>], v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let nn = h.len();
    let mut n = nn as isize - 1;
    let low: isize = 0;
    let high: isize = nn as isize - 1;
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut t, mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[i][j].abs();
        }
    }

    if norm == 0.0 {
        // Zero matrix: every eigenvalue is 0 and the identity is an eigenbasis.
        return Ok(());
    }

    let mut iter = 0usize;
    while n >= low {
        let nu = n as usize;
        let mut l = n;
        while l > low {
            let lu = l as usize;
            s = h[lu - 1][lu - 1].abs() + h[lu][lu].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[lu][lu - 1].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            h[nu][nu] += exshift;
            d[nu] = h[nu][nu];
            e[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            w = h[nu][nu - 1] * h[nu - 1][nu];
            p = (h[nu - 1][nu - 1] - h[nu][nu]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[nu][nu] += exshift;
            h[nu - 1][nu - 1] += exshift;
            x = h[nu][nu];
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
                x = h[nu][nu - 1];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in nu - 1..nn {
                    z = h[nu - 1][j];
                    h[nu - 1][j] = q * z + p * h[nu][j];
                    h[nu][j] = q * h[nu][j] - p * z;
                }
                for row in h.iter_mut().take(nu + 1) {
                    z = row[nu - 1];
                    row[nu - 1] = q * z + p * row[nu];
                    row[nu] = q * row[nu] - p * z;
                }
                for row in v.iter_mut().take(high as usize + 1) {
                    z = row[nu - 1];
                    row[nu - 1] = q * z + p * row[nu];
                    row[nu] = q * row[nu] - p * z;
                }
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[nu][nu];
            y = 0.0;
            w = 0.0;
            if l < n {
                y = h[nu - 1][nu - 1];
                w = h[nu][nu - 1] * h[nu - 1][nu];
            }
            if iter == 10 {
                exshift += x;
                for i in low as usize..=nu {
                    h[i][i] -= x;
                }
                s = h[nu][nu - 1].abs() + h[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low as usize..=nu {
                        h[i][i] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            if iter > MAX_ITER_PER_ROOT {
                return Err(Error::Linalg("QR iteration did not converge".into()));
            }

            let mut m = n - 2;
            while m >= l {
                let mu = m as usize;
                z = h[mu][mu];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[mu + 1][mu] + h[mu][mu + 1];
                q = h[mu + 1][mu + 1] - z - r - s;
                r = h[mu + 2][mu + 1];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[mu][mu - 1].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[mu - 1][mu - 1].abs() + z.abs() + h[mu + 1][mu + 1].abs()))
                {
                    break;
                }
                m -= 1;
            }
            let mu = m as usize;
            for i in mu + 2..=nu {
                h[i][i - 2] = 0.0;
                if i > mu + 2 {
                    h[i][i - 3] = 0.0;
                }
            }

            for k in mu..nu {
                let notlast = k != nu - 1;
                if k != mu {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = if notlast { h[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != mu {
                        h[k][k - 1] = -s * x;
                    } else if l != m {
                        h[k][k - 1] = -h[k][k - 1];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[k][j] + q * h[k + 1][j];
                        if notlast {
                            p += r * h[k + 2][j];
                            h[k + 2][j] -= p * z;
                        }
                        h[k][j] -= p * x;
                        h[k + 1][j] -= p * y;
                    }
                    for row in h.iter_mut().take(nu.min(k + 3) + 1) {
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p += z * row[k + 2];
                            row[k + 2] -= p * r;
                        }
                        row[k] -= p;
                        row[k + 1] -= p * q;
                    }
                    for row in v.iter_mut().take(high as usize + 1) {
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p += z * row[k + 2];
                            row[k + 2] -= p * r;
                        }
                        row[k] -= p;
                        row[k + 1] -= p * q;
                    }
                }
            }
        }
    }

    if norm == 0.0 {
        return Ok(());
    }

    // Back-substitute to find vectors of the upper triangular form.
    for nu in (0..nn).rev() {
        p = d[nu];
        q = e[nu];
        if q == 0.0 {
            let mut l = nu;
            h[nu][nu] = 1.0;
            for i in (0..nu).rev() {
                w = h[i][i] - p;
                r = 0.0;
                for j in l..=nu {
                    r += h[i][j] * h[j][nu];
                }
                if e[i] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        h[i][nu] = if w != 0.0 { -r / w } else { -r / (eps * norm) };
                    } else {
                        x = h[i][i + 1];
                        y = h[i + 1][i];
                        q = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        t = (x * s - z * r) / q;
                        h[i][nu] = t;
                        h[i + 1][nu] = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    t = h[i][nu].abs();
                    if (eps * t) * t > 1.0 {
                        for row in h.iter_mut().take(nu + 1).skip(i) {
                            row[nu] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            let mut l = nu - 1;
            if h[nu][nu - 1].abs() > h[nu - 1][nu].abs() {
                h[nu - 1][nu - 1] = q / h[nu][nu - 1];
                h[nu - 1][nu] = -(h[nu][nu] - p) / h[nu][nu - 1];
            } else {
                let (cr, ci) = cdiv(0.0, -h[nu - 1][nu], h[nu - 1][nu - 1] - p, q);
                h[nu - 1][nu - 1] = cr;
                h[nu - 1][nu] = ci;
            }
            h[nu][nu - 1] = 0.0;
            h[nu][nu] = 1.0;
            for i in (0..nu.saturating_sub(1)).rev() {
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l..=nu {
                    ra += h[i][j] * h[j][nu - 1];
                    sa += h[i][j] * h[j][nu];
                }
                w = h[i][i] - p;
                if e[i] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h[i][nu - 1] = cr;
                        h[i][nu] = ci;
                    } else {
                        x = h[i][i + 1];
                        y = h[i + 1][i];
                        let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                        let vi = (d[i] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) = cdiv(
                            x * r - z * ra + q * sa,
                            x * s - z * sa - q * ra,
                            vr,
                            vi,
                        );
                        h[i][nu - 1] = cr;
                        h[i][nu] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            h[i + 1][nu - 1] = (-ra - w * h[i][nu - 1] + q * h[i][nu]) / x;
                            h[i + 1][nu] = (-sa - w * h[i][nu] - q * h[i][nu - 1]) / x;
                        } else {
                            let (cr, ci) = cdiv(-r - y * h[i][nu - 1], -s - y * h[i][nu], z, q);
                            h[i + 1][nu - 1] = cr;
                            h[i + 1][nu] = ci;
                        }
                    }
                    t = h[i][nu - 1].abs().max(h[i][nu].abs());
                    if (eps * t) * t > 1.0 {
                        for row in h.iter_mut().take(nu + 1).skip(i) {
                            row[nu - 1] /= t;
                            row[nu] /= t;
                        }
                    }
                }
            }
        }
    }

    // Back transformation to eigenvectors of the original matrix.
    for j in (0..nn).rev() {
        for i in 0..nn {
            let mut acc = 0.0;
            for k in 0..=j {
                acc += v[i][k] * h[k][j];
            }
            v[i][j] = acc;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    pub(crate) fn residuals(m: &Mat, e: &Eigen) -> f64 {
        let n = m.rows();
        let mc = m.to_complex();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let v = e.vector(j);
            let mut r = 0.0;
            for i in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += mc[(i, k)] * v[k];
                }
                r += (acc - e.values[j] * v[i]).norm_sqr();
            }
            worst = worst.max(r.sqrt());
        }
        worst
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = eig(&Mat::identity(4)).unwrap();
        assert!(e.values.iter().all(|l| (l - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let m = Mat::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let e = eig(&m).unwrap();
        assert!((e.values[0] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        assert!((e.values[1] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!(residuals(&m, &e) < 1e-14);
    }

    #[test]
    fn sorted_by_modulus_then_real_part() {
        let m = Mat::from_rows(&[
            vec![0.5, 0.0, 0.0],
            vec![0.0, -2.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let e = eig(&m).unwrap();
        let re: Vec<f64> = e.values.iter().map(|l| l.re).collect();
        assert_eq!(re, vec![2.0, -2.0, 0.5]);
    }

    #[test]
    fn random_matrices_have_small_residuals() {
        let mut rng = Rng::new(11);
        for n in [1usize, 2, 3, 5, 8, 16, 32] {
            for _ in 0..5 {
                let m = Mat::from_vec(n, n, (0..n * n).map(|_| rng.normal()).collect()).unwrap();
                let e = eig(&m).unwrap();
                assert!(residuals(&m, &e) <= 1e-8 * m.frobenius(), "n={n}");
                let inv = e.inverse().unwrap();
                let prod = e.vectors.matmul(inv).unwrap();
                assert!(prod.sub(&CMat::identity(n)).frobenius() < 1e-6);
            }
        }
    }

    #[test]
    fn left_vectors_are_biorthogonal() {
        let mut rng = Rng::new(4);
        let n = 6;
        let m = Mat::from_vec(n, n, (0..n * n).map(|_| rng.normal()).collect()).unwrap();
        let e = eig(&m).unwrap();
        for j in 0..n {
            let w = e.left_vector(&m, j).unwrap();
            // wᵀ M = λ wᵀ
            for c in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    acc += w[r] * m[(r, c)];
                }
                assert!((acc - e.values[j] * w[c]).norm() < 1e-8);
            }
            for k in 0..n {
                let dot: Complex64 = w.iter().zip(e.vector(k)).map(|(a, b)| a * b).sum();
                let want = if k == j { 1.0 } else { 0.0 };
                assert!((dot - want).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_matrix_is_handled() {
        let e = eig(&Mat::zeros(3, 3)).unwrap();
        assert!(e.values.iter().all(|l| l.norm() == 0.0));
    }

    #[test]
    fn clusters_group_repeated_values() {
        let m = Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.3, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let e = eig(&m).unwrap();
        assert_eq!(e.clusters(1e-10), vec![vec![0, 1], vec![2]]);
    }
}
