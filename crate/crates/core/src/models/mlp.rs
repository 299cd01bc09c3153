//! Fully connected stacks applied to every time step independently.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    output: Activation,
}

impl Mlp {
    /// Layer widths `sizes[0] → … → sizes[last]`, ReLU between layers,
    /// uniform He/Xavier weights and zero biases.
    pub fn new(store: &mut ParamStore, prefix: &str, sizes: &[usize], output: Activation, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(sizes.len().saturating_sub(1));
        let last = sizes.len().saturating_sub(2);
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            // He bound ahead of a ReLU, Xavier for the output layer.
            let bound = if l < last {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let w: Vec<f32> = (0..fan_in * fan_out)
                .map(|_| rng.uniform(-bound, bound) as f32)
                .collect();
            let w = store.add(
                format!("{prefix}.{l}.weight"),
                Tensor::new(vec![fan_in, fan_out], w).expect("weight shape"),
            );
            let b = store.add(format!("{prefix}.{l}.bias"), Tensor::zeros(&[fan_out]));
            layers.push((w, b));
        }
        Self { layers, output }
    }

    pub fn output_dim<R: Real>(&self, store: &ParamStore<R>) -> usize {
        self.layers.last().map_or(0, |(w, _)| store.get(*w).cols())
    }

    /// Recorded forward pass on `x` (`[rows, in]`).
    pub fn forward<R: Real>(&self, tape: &mut Tape<R>, store: &ParamStore<R>, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            let lin = tape.matmul(h, wv)?;
            h = tape.add_row(lin, bv)?;
            h = if l < last {
                tape.relu(h)
            } else {
                match self.output {
                    Activation::Identity => h,
                    Activation::Relu => tape.relu(h),
                    Activation::Sigmoid => tape.sigmoid(h),
                }
            };
        }
        Ok(h)
    }

    /// Forward pass without recording.
    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let mut out = h.matmul(store.get(w))?;
            let bias = store.get(b).data();
            let c = out.cols();
            for row in out.data_mut().chunks_mut(c.max(1)) {
                for (o, &bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
            let act = if l < last { Activation::Relu } else { self.output };
            h = match act {
                Activation::Identity => out,
                Activation::Relu => out.map(|v| v.max(0.0)),
                Activation::Sigmoid => out.map(|v| 1.0 / (1.0 + (-v).exp())),
            };
        }
        Ok(h)
    }
}
