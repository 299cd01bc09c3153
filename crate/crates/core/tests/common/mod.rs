//! Helpers shared by integration test targets.
#![allow(dead_code)]

pub mod desk;
pub mod end_to_end;
pub mod formats;
pub mod numerics;
pub mod oracles;

use msd_core::autodiff::{ParamStore, Tape};
use msd_core::data::Modality;
use msd_core::models::{Geometry, ModelKind, ModelSpec, NeuralModel};
use msd_core::rng::Rng;
use msd_core::Tensor;
use serde_json::Value;

pub struct GradCheck {
    pub label: String,
    /// Coordinates compared against finite differences.
    pub checked: usize,
    /// Coordinates dropped because the loss is not smooth there.
    pub skipped: usize,
    pub max_rel_err: f64,
}

/// Relative error with a floor so that derivatives at rounding level are
/// compared in absolute terms.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of a model's full training loss with
/// central differences in f64 on `coords` parameter coordinates spread
/// over every parameter tensor. A coordinate whose difference quotients at
/// `h` and `h/2` disagree sits on a kink and is skipped.
pub fn check_model_gradient(label: &str, kind: ModelKind, params: Value, geometry: Geometry, n: usize, coords: usize) -> GradCheck {
    let spec = ModelSpec::from_parts(kind, params).expect("valid spec");
    let model = NeuralModel::new(spec, geometry.clone(), 3).expect("model");
    let mut store: ParamStore<f64> = model.params.cast::<f64>();
    let mut rng = Rng::new(17);
    let x = Tensor::new(
        vec![n * geometry.seq_len, geometry.frame_len],
        (0..n * geometry.seq_len * geometry.frame_len).map(|_| rng.next_f32() as f64).collect(),
    )
    .unwrap();
    let eval = |store: &ParamStore<f64>| -> f64 {
        let mut tape = Tape::<f64>::new();
        let terms = model.loss(store, &mut tape, &x, n, &mut Rng::new(99)).expect("loss");
        tape.value(terms.total).data()[0]
    };
    let mut tape = Tape::<f64>::new();
    let terms = model.loss(&store, &mut tape, &x, n, &mut Rng::new(99)).expect("loss");
    let grads = tape.backward(terms.total, &store).expect("backward");

    let ids: Vec<_> = store.ids().collect();
    let mut pick = Rng::new(5);
    let (mut checked, mut skipped, mut max_rel) = (0, 0, 0.0f64);
    let h = 1e-5;
    for c in 0..coords {
        let id = ids[c % ids.len()];
        let k = pick.below(store.get(id).len());
        let analytic = grads.get(id).data()[k];
        let orig = store.get(id).data()[k];
        let mut quotient = |step: f64| {
            store.get_mut(id).data_mut()[k] = orig + step;
            let up = eval(&store);
            store.get_mut(id).data_mut()[k] = orig - step;
            let down = eval(&store);
            store.get_mut(id).data_mut()[k] = orig;
            (up - down) / (2.0 * step)
        };
        let (fd, fd_half) = (quotient(h), quotient(h / 2.0));
        if rel_err(fd, fd_half) > 1e-4 {
            skipped += 1;
            continue;
        }
        checked += 1;
        max_rel = max_rel.max(rel_err(analytic, fd));
    }
    GradCheck {
        label: label.to_string(),
        checked,
        skipped,
        max_rel_err: max_rel,
    }
}

pub fn small_geometry(seq_len: usize) -> Geometry {
    Geometry {
        seq_len,
        frame_len: 10,
        modality: Modality::Timeseries,
    }
}

/// Every loss the models train with, on small shapes.
pub fn gradient_suite(coords: usize) -> Vec<GradCheck> {
    use serde_json::json;
    let g = small_geometry(5);
    let ae = json!({"latent_dim": 4, "hidden_dims": [8]});
    vec![
        check_model_gradient("ae", ModelKind::Ae, ae.clone(), g.clone(), 3, coords),
        check_model_gradient("vae", ModelKind::Vae, ae.clone(), g.clone(), 3, coords),
        check_model_gradient(
            "beta-vae",
            ModelKind::BetaVae,
            json!({"latent_dim": 4, "hidden_dims": [8], "beta": 2.5}),
            g.clone(),
            3,
            coords,
        ),
        check_model_gradient(
            "sparse-ae",
            ModelKind::SparseAe,
            json!({"latent_dim": 6, "hidden_dims": [8], "sparsity_weight": 0.3}),
            g.clone(),
            3,
            coords,
        ),
        check_model_gradient(
            "skd",
            ModelKind::Skd,
            json!({"k_dim": 4, "hidden_dim": 8, "static_size": 1}),
            g.clone(),
            4,
            coords,
        ),
        check_model_gradient(
            "skd prediction only",
            ModelKind::Skd,
            json!({"k_dim": 4, "hidden_dim": 8, "static_size": 1, "w_rec": 0.0, "w_eigs": 0.0}),
            g.clone(),
            4,
            coords,
        ),
        check_model_gradient(
            "skd spectral only",
            ModelKind::Skd,
            json!({"k_dim": 4, "hidden_dim": 8, "static_size": 1, "w_rec": 0.0, "w_pred": 0.0}),
            g.clone(),
            4,
            coords,
        ),
        check_model_gradient(
            "ssm-skd",
            ModelKind::SsmSkd,
            json!({"k_dim": 3, "hidden_dim": 8}),
            small_geometry(6),
            3,
            coords,
        ),
    ]
}

pub mod judging {
    use std::sync::Arc;
    use std::time::Instant;

    use msd_core::data::{Enumeration, Generator, Shapes2D16};
    use msd_core::judges::{spawn_server, Judge, OracleJudge, RemoteJudge, ServerInfo};
    use msd_core::rng::Rng;

    pub struct RemoteParity {
        pub agreed: usize,
        pub total: usize,
        pub p99_ms: f64,
    }

    /// Judges `n` Shapes sequences through a loopback server and in
    /// process, comparing every factor label and timing each request.
    pub fn remote_parity(n: usize) -> RemoteParity {
        let gen = Shapes2D16::new();
        let enumeration = Arc::new(Enumeration::new(&gen));
        let local = OracleJudge::new(enumeration.clone());
        let info = ServerInfo {
            name: "shapes2d16".into(),
            factors: gen.factors().to_vec(),
            seq_len: gen.seq_len(),
            frame_shape: gen.frame_shape(),
        };
        let server = spawn_server(Arc::new(local.clone()), info, "127.0.0.1:0", 8).expect("server");
        let remote = RemoteJudge::new(&server.url(), gen.factors().to_vec(), gen.seq_len(), gen.frame_shape());
        let mut rng = Rng::new(21);
        let mut latencies = Vec::new();
        let mut agreed = 0;
        for _ in 0..n {
            let i = rng.below(enumeration.len());
            // Light noise keeps the exact-match shortcut out of the picture.
            let x: Vec<f32> = enumeration.sequence(i).iter().map(|v| v + 0.01 * rng.normal() as f32).collect();
            let f = rng.below(gen.factors().len());
            let t = Instant::now();
            let got = remote.judge(&x, f).expect("remote judge");
            latencies.push(t.elapsed().as_secs_f64() * 1e3);
            agreed += (got == local.judge(&x, f).expect("local judge")) as usize;
        }
        latencies.sort_by(f64::total_cmp);
        let p99 = latencies[((latencies.len() as f64 * 0.99).ceil() as usize).saturating_sub(1)];
        RemoteParity { agreed, total: n, p99_ms: p99 }
    }

    pub struct Robustness {
        pub min_distance: f64,
        pub trials: usize,
        pub changed: usize,
    }

    /// Perturbs every clean Shapes sequence with uniform noise scaled to
    /// just under half the minimum pairwise distance and counts label
    /// changes under the oracle judge.
    pub fn oracle_robustness(draws_per_sample: usize) -> Robustness {
        let gen = Shapes2D16::new();
        let enumeration = Arc::new(Enumeration::new(&gen));
        let d = enumeration.min_pairwise_distance();
        let judge = OracleJudge::new(enumeration.clone());
        let mut rng = Rng::new(8);
        let mut trials = 0;
        let mut changed = 0;
        for i in 0..enumeration.len() {
            let clean = enumeration.sequence(i);
            let truth = enumeration.config(i);
            for k in 0..draws_per_sample {
                let raw: Vec<f64> = clean.iter().map(|_| rng.next_f32() as f64 - 0.5).collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                // Radii sweep up to 0.499 of the bound.
                let radius = 0.499 * d * 0.5 * (k + 1) as f64 / draws_per_sample as f64;
                let x: Vec<f32> = clean.iter().zip(&raw).map(|(&c, &r)| (c as f64 + r / norm * radius) as f32).collect();
                trials += 1;
                changed += (judge.judge_all(&x).expect("judge") != truth) as usize;
            }
        }
        Robustness {
            min_distance: d,
            trials,
            changed,
        }
    }
}
