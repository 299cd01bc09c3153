//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Grads, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<R: Real = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<R>>,
    pub v: Vec<Tensor<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig, params: &ParamStore<R>) -> Self {
        let zeros: Vec<Tensor<R>> = params.values().iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update of every parameter in `params` from `grads`.
    pub fn step(&mut self, params: &mut ParamStore<R>, grads: &Grads<R>) -> Result<()> {
        if grads.values.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.values.len()
            )));
        }
        for (k, p) in params.values().iter().enumerate() {
            if p.shape() != grads.values[k].shape() || p.shape() != self.m[k].shape() {
                return Err(Error::Shape(format!(
                    "parameter {k}: {:?} vs gradient {:?}",
                    p.shape(),
                    grads.values[k].shape()
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (R::of(c.beta1), R::of(c.beta2));
        let (one_b1, one_b2) = (R::of(1.0 - c.beta1), R::of(1.0 - c.beta2));
        for (k, p) in params.values_mut().iter_mut().enumerate() {
            let g = grads.values[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let mhat = mi.as_f64() / bc1;
                let vhat = vi.as_f64() / bc2;
                let upd = c.lr * mhat / (vhat.sqrt() + c.eps);
                *pi = R::of(pi.as_f64() - upd);
            }
        }
        Ok(())
    }
}
