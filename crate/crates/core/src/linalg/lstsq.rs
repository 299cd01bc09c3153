//! Thin SVD (one-sided Jacobi), pseudo-inverse and minimum-norm least squares.

use crate::error::{Error, Result};
use crate::linalg::Mat;

const MAX_SWEEPS: usize = 60;

/// Thin SVD `A = U diag(s) Vᵀ` with `r = min(m, n)` singular triplets,
/// singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

pub fn svd(a: &Mat) -> Result<Svd> {
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

/// Hestenes one-sided Jacobi on a matrix with `m >= n`.
fn jacobi_tall(a: &Mat) -> Result<Svd> {
    let (m, n) = (a.rows(), a.cols());
    // Work on columns stored contiguously.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    if cols.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Linalg("SVD input has non-finite entries".into()));
    }
    // Rotations stop once columns are orthogonal to working precision;
    // columns that are numerically zero relative to the whole matrix are
    // left alone since they only carry rounding noise.
    let tol = f64::EPSILON * (m as f64).sqrt();
    let total: f64 = cols.iter().flatten().map(|x| x * x).sum();
    let negligible = f64::EPSILON * f64::EPSILON * total;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if alpha <= negligible || beta <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
                let (left, right) = v.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Linalg("Jacobi SVD did not converge".into()));
    }
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let mut u = Mat::zeros(m, n);
    let mut vv = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        for i in 0..m {
            u[(i, k)] = if sigma > 0.0 { cols[j][i] / sigma } else { 0.0 };
        }
        for i in 0..n {
            vv[(i, k)] = v[j][i];
        }
    }
    Ok(Svd { u, s, v: vv })
}

/// Moore-Penrose pseudo-inverse. Singular values below
/// `max(m, n) * eps * s_max` are treated as zero.
pub fn pinv(a: &Mat) -> Result<Mat> {
    let svd = svd(a)?;
    let (m, n) = (a.rows(), a.cols());
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let tol = m.max(n) as f64 * f64::EPSILON * smax;
    let mut out = Mat::zeros(n, m);
    for (k, &sigma) in svd.s.iter().enumerate() {
        if sigma <= tol || sigma == 0.0 {
            continue;
        }
        let inv = 1.0 / sigma;
        for i in 0..n {
            let vik = svd.v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += vik * svd.u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Minimum-Frobenius-norm minimizer of `‖A X − B‖_F`.
pub fn lstsq(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!(
            "lstsq: A has {} rows, B has {}",
            a.rows(),
            b.rows()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::Shape("lstsq needs at least one row".into()));
    }
    pinv(a)?.matmul(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(m: usize, n: usize, rng: &mut Rng) -> Mat {
        Mat::from_vec(m, n, (0..m * n).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = Rng::new(1);
        for &(m, n) in &[(5, 3), (3, 5), (7, 7), (1, 4), (4, 1)] {
            let a = random(m, n, &mut rng);
            let d = svd(&a).unwrap();
            let r = d.s.len();
            let mut us = d.u.clone();
            for i in 0..us.rows() {
                for k in 0..r {
                    us[(i, k)] *= d.s[k];
                }
            }
            let rec = us.matmul(&d.v.transpose()).unwrap();
            assert!(rec.sub(&a).unwrap().frobenius() < 1e-12, "{m}x{n}");
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn identity_system_returns_rhs() {
        let mut rng = Rng::new(2);
        let b = random(4, 4, &mut rng);
        let x = lstsq(&Mat::identity(4), &b).unwrap();
        assert!(x.sub(&b).unwrap().frobenius() < 1e-12);
    }

    #[test]
    fn scalar_doubling_sequence() {
        let a = Mat::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let b = Mat::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        let x = lstsq(&a, &b).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_gives_zero_solution() {
        let a = Mat::zeros(3, 2);
        let b = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let x = lstsq(&a, &b).unwrap();
        assert_eq!(x, Mat::zeros(2, 2));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(lstsq(&Mat::zeros(3, 2), &Mat::zeros(2, 2)).is_err());
    }

    #[test]
    fn penrose_conditions_hold_for_rank_deficient_input() {
        // Rank-1 4x3 matrix.
        let a = Mat::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![-1.0, -2.0, -3.0],
            vec![0.5, 1.0, 1.5],
        ])
        .unwrap();
        let p = pinv(&a).unwrap();
        let apa = a.matmul(&p).unwrap().matmul(&a).unwrap();
        let pap = p.matmul(&a).unwrap().matmul(&p).unwrap();
        assert!(apa.sub(&a).unwrap().frobenius() < 1e-12);
        assert!(pap.sub(&p).unwrap().frobenius() < 1e-12);
        let ap = a.matmul(&p).unwrap();
        assert!(ap.sub(&ap.transpose()).unwrap().frobenius() < 1e-12);
    }
}
