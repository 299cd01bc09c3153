//! Linear algebra oracles: eigen residuals and Koopman recovery from
//! sequences generated by a known linear map.

use msd_core::linalg::koopman::{fit_instance, projector, KoopmanDecomposition, ModeKind, StaticMode};
use msd_core::linalg::{eig, Mat};
use msd_core::rng::Rng;
use num_complex::Complex64;

fn gaussian(rng: &mut Rng, n: usize, scale: f64) -> Mat {
    Mat::from_vec(n, n, (0..n * n).map(|_| scale * rng.normal()).collect()).unwrap()
}

/// A mix of dense, symmetric, triangular, small-integer and companion
/// matrices, the latter two with repeated or clustered eigenvalues.
fn test_matrix(rng: &mut Rng, i: usize, n: usize) -> Mat {
    match i % 5 {
        0 | 1 => gaussian(rng, n, 1.0),
        2 => {
            let a = gaussian(rng, n, 1.0);
            a.add(&a.transpose()).unwrap().scale(0.5)
        }
        3 => Mat::from_vec(n, n, (0..n * n).map(|_| rng.below(5) as f64 - 2.0).collect()).unwrap(),
        _ => {
            let mut c = Mat::zeros(n, n);
            for r in 1..n {
                c[(r, r - 1)] = 1.0;
            }
            for r in 0..n {
                c[(r, n - 1)] = rng.uniform(-1.0, 1.0);
            }
            c
        }
    }
}

/// Worst `‖Av − λv‖₂ / ‖A‖_F` over `count` matrices of size `1..=max_n`.
pub fn worst_eigen_residual(count: usize, max_n: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = 1 + rng.below(max_n);
        let a = test_matrix(&mut rng, i, n);
        let e = eig(&a).expect("eigendecomposition");
        let norm = a.frobenius().max(f64::MIN_POSITIVE);
        for (j, &lambda) in e.values.iter().enumerate() {
            let v = e.vector(j);
            let mut r2 = 0.0;
            for row in 0..n {
                let av: Complex64 = (0..n).map(|c| v[c] * a[(row, c)]).sum();
                r2 += (av - lambda * v[row]).norm_sqr();
            }
            worst = worst.max(r2.sqrt() / norm);
        }
    }
    worst
}

pub struct KoopmanRecovery {
    /// Largest entry error of the fitted operator against the generator.
    pub operator_err: f64,
    /// Largest entry of `P_static + P_dynamic − I` with both projectors
    /// built independently from their own mode sets.
    pub partition_err: f64,
    pub instances: usize,
}

/// Rolls out `instances` random linear maps from random initial states
/// for more steps than the state width, then refits each map.
pub fn koopman_recovery(instances: usize, seed: u64) -> KoopmanRecovery {
    let mut rng = Rng::new(seed);
    let mut operator_err: f64 = 0.0;
    let mut partition_err: f64 = 0.0;
    for i in 0..instances {
        let k = 2 + i % 7;
        let t = k + 4;
        let gen = gaussian(&mut rng, k, 1.0 / (k as f64).sqrt());
        let mut z = Mat::zeros(t, k);
        for c in 0..k {
            z[(0, c)] = rng.normal();
        }
        for s in 1..t {
            for c in 0..k {
                z[(s, c)] = (0..k).map(|r| z[(s - 1, r)] * gen[(r, c)]).sum();
            }
        }
        let fitted = fit_instance(&z).expect("fit");
        for (a, b) in fitted.data().iter().zip(gen.data()) {
            operator_err = operator_err.max((a - b).abs());
        }
        let static_size = 1 + i % k.min(3);
        let dec = KoopmanDecomposition::new(gen, static_size.min(k - 1).max(1), StaticMode::Ball).expect("decomposition");
        let ps = projector(&dec.matrix, &dec.eigen, &dec.indices(ModeKind::Static)).expect("static projector");
        // A conjugate pair tagged static can leave no dynamic modes.
        let dynamic = dec.indices(ModeKind::Dynamic);
        let pd = if dynamic.is_empty() {
            Mat::zeros(k, k)
        } else {
            projector(&dec.matrix, &dec.eigen, &dynamic).expect("dynamic projector")
        };
        let sum = ps.add(&pd).unwrap().sub(&Mat::identity(k)).unwrap();
        partition_err = sum.data().iter().fold(partition_err, |m, v| m.max(v.abs()));
    }
    KoopmanRecovery {
        operator_err,
        partition_err,
        instances,
    }
}
