//! Trainable models: per-frame MLP encoders and decoders shared across
//! time, with autoencoder, variational, sparse and Koopman objectives.

use serde::{Deserialize, Serialize};

use crate::autodiff::{from_mat, to_mat, ParamStore, Tape, Var};
use crate::data::Modality;
use crate::error::{Error, Result};
use crate::linalg::koopman::{fit_batch, fit_instance, KoopmanDecomposition, SpectralConfig};
use crate::linalg::Mat;
use crate::models::mlp::{Activation, Mlp};
use crate::models::spec::{ModelKind, ModelSpec};
use crate::models::{ChannelRole, SequenceModel};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// Input geometry a model is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub seq_len: usize,
    pub frame_len: usize,
    pub modality: Modality,
}

/// The scalar training objective and its unweighted components.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub total: Var,
    pub terms: Vec<(&'static str, f64)>,
}

impl LossTerms {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub spec: ModelSpec,
    pub geometry: Geometry,
    pub params: ParamStore,
    enc: Mlp,
    dec: Mlp,
    global: Option<GlobalKoopman>,
}

/// SKD's Koopman matrix fit on training latents, with cached projectors.
#[derive(Debug, Clone)]
struct GlobalKoopman {
    decomposition: KoopmanDecomposition,
    p_static: Mat,
    p_dynamic: Mat,
}

fn scalar_of<R: Real>(tape: &Tape<R>, v: Var) -> f64 {
    tape.value(v).data()[0].as_f64()
}

impl NeuralModel {
    /// Freshly initialized weights, seeded from `derive_seed(seed, "init")`.
    pub fn new(spec: ModelSpec, geometry: Geometry, seed: u64) -> Result<Self> {
        spec.validate()?;
        if geometry.seq_len < 2 || geometry.frame_len == 0 {
            return Err(Error::Config(format!(
                "model needs T >= 2 and a non-empty frame, got T={} o={}",
                geometry.seq_len, geometry.frame_len
            )));
        }
        let o = geometry.frame_len;
        let mut rng = Rng::derived(seed, "init");
        let mut params = ParamStore::new();
        let (enc_sizes, dec_sizes) = match &spec {
            ModelSpec::Ae(p) | ModelSpec::Vae(p) => {
                let width = if spec.kind().is_variational() { 2 * p.latent_dim } else { p.latent_dim };
                stacks(o, &p.hidden_dims, p.latent_dim, width)
            }
            ModelSpec::BetaVae(p) => stacks(o, &p.hidden_dims, p.latent_dim, 2 * p.latent_dim),
            ModelSpec::SparseAe(p) => stacks(o, &p.hidden_dims, p.latent_dim, p.latent_dim),
            ModelSpec::Skd(p) => stacks(o, &[p.hidden_dim], p.k_dim, p.k_dim),
            ModelSpec::SsmSkd(p) => stacks(o, &[p.hidden_dim], p.k_dim, p.k_dim),
        };
        let enc = Mlp::new(&mut params, "encoder", &enc_sizes, Activation::Identity, &mut rng);
        // A linear read-out: a sigmoid on mostly-dark frames saturates and
        // stalls training at the mean image.
        let dec = Mlp::new(&mut params, "decoder", &dec_sizes, Activation::Identity, &mut rng);
        Ok(Self {
            spec,
            geometry,
            params,
            enc,
            dec,
            global: None,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Width of the per-step code `z` (the mean for variational models).
    pub fn code_dim(&self) -> usize {
        match &self.spec {
            ModelSpec::Ae(p) | ModelSpec::Vae(p) => p.latent_dim,
            ModelSpec::BetaVae(p) => p.latent_dim,
            ModelSpec::SparseAe(p) => p.latent_dim,
            ModelSpec::Skd(p) => p.k_dim,
            ModelSpec::SsmSkd(p) => p.k_dim,
        }
    }

    fn spectral(&self) -> Option<SpectralConfig> {
        self.spec.spectral()
    }

    /// Per-step codes `[T, code_dim]` of a flattened sequence.
    pub fn encode(&self, x: &[f32]) -> Result<Tensor> {
        let g = self.geometry;
        if x.len() != g.seq_len * g.frame_len {
            return Err(Error::Shape(format!(
                "sequence has {} values, model expects {}x{}",
                x.len(),
                g.seq_len,
                g.frame_len
            )));
        }
        let xt = Tensor::new(vec![g.seq_len, g.frame_len], x.to_vec())?;
        let h = self.enc.apply(&self.params, &xt)?;
        let d = self.code_dim();
        if h.cols() == d {
            return Ok(h);
        }
        let mut mu = Vec::with_capacity(g.seq_len * d);
        for t in 0..h.rows() {
            mu.extend_from_slice(&h.row(t)[..d]);
        }
        Tensor::new(vec![g.seq_len, d], mu)
    }

    /// Decodes per-step codes `[T, code_dim]`.
    pub fn decode(&self, z: &Tensor) -> Result<Vec<f32>> {
        Ok(self.dec.apply(&self.params, z)?.into_data())
    }

    /// Fits SKD's global Koopman matrix on the codes of `samples` and caches
    /// the static and dynamic projectors.
    pub fn fit_global_koopman(&mut self, samples: &[&[f32]]) -> Result<()> {
        use rayon::prelude::*;
        let cfg = match (&self.spec, self.spectral()) {
            (ModelSpec::Skd(_), Some(cfg)) => cfg,
            _ => return Err(Error::Unsupported(format!("{} has no global Koopman matrix", self.kind().name()))),
        };
        let codes: Vec<Mat> = samples
            .par_iter()
            .map(|x| self.encode(x).map(|z| to_mat(&z)))
            .collect::<Result<_>>()?;
        let k = fit_batch(&codes)?;
        self.set_global_koopman(k, &cfg)
    }

    fn set_global_koopman(&mut self, k: Mat, cfg: &SpectralConfig) -> Result<()> {
        let decomposition = KoopmanDecomposition::new(k, cfg.static_size, cfg.static_mode)?;
        let (p_static, p_dynamic) = decomposition.projectors()?;
        self.global = Some(GlobalKoopman {
            decomposition,
            p_static,
            p_dynamic,
        });
        Ok(())
    }

    /// Restores a stored global Koopman matrix.
    pub fn set_koopman_matrix(&mut self, k: Mat) -> Result<()> {
        let cfg = self
            .spectral()
            .ok_or_else(|| Error::Unsupported(format!("{} has no Koopman matrix", self.kind().name())))?;
        self.set_global_koopman(k, &cfg)
    }

    pub fn koopman(&self) -> Option<&KoopmanDecomposition> {
        self.global.as_ref().map(|g| &g.decomposition)
    }

    /// Per-instance decomposition of one sequence's codes (SSM-SKD).
    pub fn instance_decomposition(&self, x: &[f32]) -> Result<KoopmanDecomposition> {
        let cfg = self
            .spectral()
            .ok_or_else(|| Error::Unsupported(format!("{} has no Koopman structure", self.kind().name())))?;
        let z = to_mat(&self.encode(x)?);
        KoopmanDecomposition::new(fit_instance(&z)?, cfg.static_size, cfg.static_mode)
    }

    /// The training objective on `x` (`[n·T, o]`, `n` whole sequences).
    /// Generic over the float type so the same graph can be checked
    /// against finite differences in `f64`.
    pub fn loss<R: Real>(
        &self,
        store: &ParamStore<R>,
        tape: &mut Tape<R>,
        x: &Tensor<R>,
        n: usize,
        rng: &mut Rng,
    ) -> Result<LossTerms> {
        let t = self.geometry.seq_len;
        if n == 0 || x.rank() != 2 || x.rows() != n * t || x.cols() != self.geometry.frame_len {
            return Err(Error::Shape(format!(
                "loss batch {:?} is not {n} sequences of {t}x{}",
                x.shape(),
                self.geometry.frame_len
            )));
        }
        let xv = tape.leaf(x.clone());
        let h = self.enc.forward(tape, store, xv)?;
        let inv_n = R::one() / R::of(n as f64);
        match &self.spec {
            ModelSpec::Skd(_) | ModelSpec::SsmSkd(_) => self.koopman_loss(store, tape, xv, h, n),
            spec => {
                let d = self.code_dim();
                let mut terms = Vec::new();
                let (z, kl) = if spec.kind().is_variational() {
                    let mu = tape.slice_cols(h, 0, d)?;
                    let lv = tape.slice_cols(h, d, 2 * d)?;
                    let eps: Vec<R> = (0..n * t * d).map(|_| R::of(rng.normal())).collect();
                    let eps = tape.leaf(Tensor::new(vec![n * t, d], eps)?);
                    let half = tape.scale(lv, R::of(0.5));
                    let sd = tape.exp(half);
                    let noise = tape.mul(sd, eps)?;
                    let z = tape.add(mu, noise)?;
                    let mu2 = tape.square(mu)?;
                    let var = tape.exp(lv);
                    let a = tape.add(mu2, var)?;
                    let b = tape.sub(a, lv)?;
                    let c = tape.add_scalar(b, -R::one());
                    let s = tape.sum(c);
                    let kl = tape.scale(s, R::of(0.5) * inv_n);
                    terms.push(("kl", scalar_of(tape, kl)));
                    (z, Some(kl))
                } else {
                    (h, None)
                };
                let xh = self.dec.forward(tape, store, z)?;
                let diff = tape.sub(xh, xv)?;
                let sq = tape.square(diff)?;
                let sse = tape.sum(sq);
                let recon = tape.scale(sse, inv_n);
                terms.insert(0, ("recon", scalar_of(tape, recon)));
                let mut total = recon;
                if let Some(kl) = kl {
                    let beta = match spec {
                        ModelSpec::BetaVae(p) => p.beta,
                        _ => 1.0,
                    };
                    let weighted = tape.scale(kl, R::of(beta));
                    total = tape.add(total, weighted)?;
                }
                if let ModelSpec::SparseAe(p) = spec {
                    let a = tape.abs(z);
                    let m = tape.mean(a);
                    terms.push(("sparsity", scalar_of(tape, m)));
                    let weighted = tape.scale(m, R::of(p.sparsity_weight));
                    total = tape.add(total, weighted)?;
                }
                terms.push(("loss", scalar_of(tape, total)));
                Ok(LossTerms { total, terms })
            }
        }
    }

    fn koopman_loss<R: Real>(
        &self,
        store: &ParamStore<R>,
        tape: &mut Tape<R>,
        xv: Var,
        z: Var,
        n: usize,
    ) -> Result<LossTerms> {
        let cfg = self.spectral().expect("koopman kinds carry a spectral config");
        let t = self.geometry.seq_len;
        let xh = self.dec.forward(tape, store, z)?;
        let diff = tape.sub(xh, xv)?;
        let sq = tape.square(diff)?;
        let recon = tape.mean(sq);

        let per_instance = matches!(self.spec, ModelSpec::SsmSkd(_));
        let groups: Vec<Vec<usize>> = if per_instance {
            (0..n).map(|i| vec![i]).collect()
        } else {
            vec![(0..n).collect()]
        };
        let mut pred_sum: Option<Var> = None;
        let mut spec_sum: Option<Var> = None;
        let mut skipped = 0usize;
        for group in &groups {
            let past: Vec<usize> = group.iter().flat_map(|&i| (0..t - 1).map(move |s| i * t + s)).collect();
            let fut: Vec<usize> = past.iter().map(|&r| r + 1).collect();
            let zp = tape.gather_rows(z, &past)?;
            let zf = tape.gather_rows(z, &fut)?;
            let kv = tape.lstsq(zp, zf)?;
            let zk = tape.matmul(zp, kv)?;
            let r = tape.sub(zf, zk)?;
            let r2 = tape.square(r)?;
            let pred = tape.mean(r2);
            pred_sum = Some(match pred_sum {
                Some(acc) => tape.add(acc, pred)?,
                None => pred,
            });
            let km = to_mat(tape.value(kv));
            let spectral = match KoopmanDecomposition::new(km, cfg.static_size, cfg.static_mode)
                .and_then(|d| d.spectral_loss_grad(cfg.dynamic_thresh))
            {
                Ok((value, grad)) => tape.scalar_fn(kv, R::of(value), from_mat(&grad))?,
                Err(_) => {
                    // An eigensolver failure drops this group's spectral term for the step.
                    skipped += 1;
                    let zero = Tensor::zeros(tape.value(kv).shape());
                    tape.scalar_fn(kv, R::zero(), zero)?
                }
            };
            spec_sum = Some(match spec_sum {
                Some(acc) => tape.add(acc, spectral)?,
                None => spectral,
            });
        }
        let inv_g = R::one() / R::of(groups.len() as f64);
        let pred = tape.scale(pred_sum.expect("at least one group"), inv_g);
        let spectral = tape.scale(spec_sum.expect("at least one group"), inv_g);

        let a = tape.scale(recon, R::of(cfg.w_rec));
        let b = tape.scale(pred, R::of(cfg.w_pred));
        let c = tape.scale(spectral, R::of(cfg.w_eigs));
        let ab = tape.add(a, b)?;
        let total = tape.add(ab, c)?;
        let mut terms = vec![
            ("recon", scalar_of(tape, recon)),
            ("pred", scalar_of(tape, pred)),
            ("spectral", scalar_of(tape, spectral)),
        ];
        if skipped > 0 {
            terms.push(("eig_skipped", skipped as f64));
        }
        terms.push(("loss", scalar_of(tape, total)));
        Ok(LossTerms { total, terms })
    }
}

fn stacks(o: usize, hidden: &[usize], code: usize, enc_out: usize) -> (Vec<usize>, Vec<usize>) {
    let mut enc = vec![o];
    enc.extend_from_slice(hidden);
    enc.push(enc_out);
    let mut dec = vec![code];
    dec.extend(hidden.iter().rev());
    dec.push(o);
    (enc, dec)
}

impl SequenceModel for NeuralModel {
    fn name(&self) -> &str {
        self.kind().name()
    }

    fn seq_len(&self) -> usize {
        self.geometry.seq_len
    }

    fn frame_len(&self) -> usize {
        self.geometry.frame_len
    }

    fn latent_dim(&self) -> usize {
        if self.kind().is_koopman() {
            2 * self.code_dim()
        } else {
            self.code_dim()
        }
    }

    fn channel_roles(&self) -> Vec<ChannelRole> {
        let d = self.code_dim();
        if self.kind().is_koopman() {
            let mut roles = vec![ChannelRole::Static; d];
            roles.extend(vec![ChannelRole::Dynamic; d]);
            roles
        } else {
            vec![ChannelRole::Untyped; d]
        }
    }

    fn is_variational(&self) -> bool {
        self.kind().is_variational()
    }

    /// Codes for the autoencoder family; `[Z·P_static, Z·P_dynamic]` for
    /// the Koopman models (global projectors for SKD, per-instance ones
    /// for SSM-SKD).
    fn channels(&self, x: &[f32]) -> Result<Tensor> {
        let z = self.encode(x)?;
        let (ps, pd) = match &self.spec {
            ModelSpec::Skd(_) => {
                let g = self.global.as_ref().ok_or_else(|| {
                    Error::Validation("SKD model has no fitted global Koopman matrix".into())
                })?;
                (g.p_static.clone(), g.p_dynamic.clone())
            }
            ModelSpec::SsmSkd(_) => {
                let zm = to_mat(&z);
                let cfg = self.spectral().expect("ssm-skd is spectral");
                let d = KoopmanDecomposition::new(fit_instance(&zm)?, cfg.static_size, cfg.static_mode)?;
                d.projectors()?
            }
            _ => return Ok(z),
        };
        let zm = to_mat(&z);
        let s = zm.matmul(&ps)?;
        let dy = zm.matmul(&pd)?;
        let (t, k) = (zm.rows(), zm.cols());
        let mut out = Vec::with_capacity(t * 2 * k);
        for r in 0..t {
            out.extend(s.row(r).iter().map(|&v| v as f32));
            out.extend(dy.row(r).iter().map(|&v| v as f32));
        }
        Tensor::new(vec![t, 2 * k], out)
    }

    fn decode_channels(&self, c: &Tensor) -> Result<Vec<f32>> {
        let l = self.latent_dim();
        if c.rank() != 2 || c.rows() != self.geometry.seq_len || c.cols() != l {
            return Err(Error::Shape(format!(
                "channels {:?}, expected [{}, {l}]",
                c.shape(),
                self.geometry.seq_len
            )));
        }
        if !self.kind().is_koopman() {
            return self.decode(c);
        }
        let k = self.code_dim();
        let mut z = Vec::with_capacity(c.rows() * k);
        for t in 0..c.rows() {
            let row = c.row(t);
            z.extend((0..k).map(|j| row[j] + row[k + j]));
        }
        self.decode(&Tensor::new(vec![c.rows(), k], z)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spec::ModelSpec;
    use serde_json::json;

    fn geometry() -> Geometry {
        Geometry {
            seq_len: 5,
            frame_len: 6,
            modality: Modality::Timeseries,
        }
    }

    fn batch(n: usize, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        Tensor::new(vec![n * 5, 6], (0..n * 30).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap()
    }

    #[test]
    fn shapes_and_roles() {
        for kind in ModelKind::ALL {
            let spec = ModelSpec::from_parts(kind, json!(null)).unwrap();
            let mut m = NeuralModel::new(spec, geometry(), 1).unwrap();
            let x = batch(3, 2);
            let seqs: Vec<&[f32]> = x.data().chunks(30).collect();
            if kind == ModelKind::Skd {
                assert!(m.channels(seqs[0]).is_err());
                m.fit_global_koopman(&seqs).unwrap();
            }
            let c = m.channels(seqs[0]).unwrap();
            assert_eq!(c.shape(), &[5, m.latent_dim()]);
            assert_eq!(m.channel_roles().len(), m.latent_dim());
            assert_eq!(m.reconstruct(seqs[1]).unwrap().len(), 30);
            let mut tape = Tape::new();
            let lt = m.loss(&m.params, &mut tape, &x, 3, &mut Rng::new(0)).unwrap();
            assert!(lt.get("loss").unwrap().is_finite());
        }
    }

    #[test]
    fn koopman_channels_partition_the_code() {
        let spec = ModelSpec::from_parts(ModelKind::SsmSkd, json!({"k_dim": 4, "hidden_dim": 8})).unwrap();
        let m = NeuralModel::new(spec, geometry(), 3).unwrap();
        let x = batch(1, 4);
        let c = m.channels(x.data()).unwrap();
        let z = m.encode(x.data()).unwrap();
        for t in 0..5 {
            for j in 0..4 {
                let sum = c.at2(t, j) + c.at2(t, 4 + j);
                assert!((sum - z.at2(t, j)).abs() < 1e-4, "{sum} vs {}", z.at2(t, j));
            }
        }
    }

    #[test]
    fn beta_zero_is_reconstruction_only() {
        let g = geometry();
        let x = batch(2, 5);
        let ae = NeuralModel::new(ModelSpec::from_parts(ModelKind::BetaVae, json!({"beta": 0.0})).unwrap(), g, 9).unwrap();
        let mut tape = Tape::new();
        let lt = ae.loss(&ae.params, &mut tape, &x, 2, &mut Rng::new(1)).unwrap();
        assert!((lt.get("loss").unwrap() - lt.get("recon").unwrap()).abs() < 1e-6);
    }
}
