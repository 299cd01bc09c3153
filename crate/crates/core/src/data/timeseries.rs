//! Six-channel sensor-like series of length 24.
//!
//! `x[t, c] = offset(station, c) + amp(regime)·sin(2π·freq·t/T + phase(season))
//!            + slope·t/T + noise`, with uniform noise in
//! `[−noise_scale, noise_scale)` drawn from a stream keyed by the seed and
//! the configuration index, consumed in `(t, c)` order.

use std::f64::consts::PI;

use crate::data::{FactorKind, FactorSpec, Generator, Modality};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, mix64, Rng};

pub const SEQ_LEN: usize = 24;
pub const CHANNELS: usize = 6;
pub const DEFAULT_NOISE: f64 = 0.01;

const AMPLITUDES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const PHASES: [f64; 4] = [0.0, 0.5 * PI, PI, 1.5 * PI];
const SLOPES: [f64; 3] = [-1.0, 0.0, 1.0];
const FREQUENCIES: [f64; 3] = [1.0, 2.0, 3.0];
const OFFSETS: [[f64; CHANNELS]; 5] = [
    [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
    [1.0, 0.8, 0.6, 0.4, 0.2, 0.0],
    [0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
    [0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
    [1.0, 0.0, 0.5, 1.0, 0.0, 0.5],
];

pub const REGIME: usize = 0;
pub const SEASON: usize = 1;
pub const STATION: usize = 2;
pub const TREND: usize = 3;
pub const FREQUENCY: usize = 4;

#[derive(Debug, Clone)]
pub struct Ts24 {
    factors: Vec<FactorSpec>,
    seed: u64,
    noise_scale: f64,
}

impl Ts24 {
    pub fn new(seed: u64, noise_scale: f64) -> Result<Self> {
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(Error::Config(format!("noise scale must be >= 0, got {noise_scale}")));
        }
        let factors = vec![
            FactorSpec::new("regime", FactorKind::Static, &["calm", "mild", "strong", "extreme"]),
            FactorSpec::new("season", FactorKind::Static, &["winter", "spring", "summer", "autumn"]),
            FactorSpec::new("station", FactorKind::Static, &["s0", "s1", "s2", "s3", "s4"]),
            FactorSpec::new("trend", FactorKind::Dynamic, &["falling", "flat", "rising"]),
            FactorSpec::new("frequency", FactorKind::Dynamic, &["f1", "f2", "f3"]),
        ];
        Ok(Self {
            factors,
            seed,
            noise_scale,
        })
    }

    pub fn offset(station: usize, channel: usize) -> f64 {
        OFFSETS[station][channel]
    }

    pub fn slope(trend: usize) -> f64 {
        SLOPES[trend]
    }
}

impl Generator for Ts24 {
    fn name(&self) -> &str {
        "ts24"
    }

    fn modality(&self) -> Modality {
        Modality::Timeseries
    }

    fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    fn seq_len(&self) -> usize {
        SEQ_LEN
    }

    fn frame_shape(&self) -> Vec<usize> {
        vec![CHANNELS]
    }

    fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn render(&self, config_index: usize, labels: &[u32], clean: bool) -> Vec<f32> {
        let amp = AMPLITUDES[labels[REGIME] as usize];
        let phase = PHASES[labels[SEASON] as usize];
        let station = labels[STATION] as usize;
        let slope = SLOPES[labels[TREND] as usize];
        let freq = FREQUENCIES[labels[FREQUENCY] as usize];
        let mut rng = Rng::new(mix64(derive_seed(self.seed, "ts24/noise") ^ config_index as u64));
        let use_noise = !clean && self.noise_scale > 0.0;
        let n = SEQ_LEN as f64;
        let mut out = Vec::with_capacity(SEQ_LEN * CHANNELS);
        for t in 0..SEQ_LEN {
            let tf = t as f64;
            let wave = amp * (2.0 * PI * freq * tf / n + phase).sin();
            let trend = slope * tf / n;
            for c in 0..CHANNELS {
                let mut v = OFFSETS[station][c] + wave + trend;
                if use_noise {
                    v += rng.uniform(-self.noise_scale, self.noise_scale);
                }
                out.push(v as f32);
            }
        }
        out
    }
}
