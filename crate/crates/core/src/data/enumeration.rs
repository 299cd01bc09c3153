//! Clean renders of every configuration of a generator, with exact
//! nearest-neighbour lookup at sequence and frame level.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::data::{FactorKind, FactorSpec, Generator, StateSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Enumeration {
    factors: Vec<FactorSpec>,
    space: StateSpace,
    seq_len: usize,
    frame_len: usize,
    sequences: Vec<f32>,
    /// Distinct clean frames in first-occurrence order.
    frames: Vec<f32>,
    /// Configuration index of each distinct frame's first occurrence.
    frame_source: Vec<usize>,
    /// Exact-match shortcuts: bit pattern to first index.
    sequence_index: HashMap<Vec<u32>, usize>,
    frame_index: HashMap<Vec<u32>, usize>,
    sequence_norms: Vec<f64>,
    frame_norms: Vec<f64>,
}

/// Hash key of a payload; `-0.0` and `0.0` share a key.
fn key(x: &[f32]) -> Vec<u32> {
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Squared L2 distance with early exit once `bound` is exceeded.
fn bounded_distance(a: &[f32], b: &[f32], bound: f64) -> f64 {
    let mut acc = 0.0f64;
    for (ca, cb) in a.chunks(64).zip(b.chunks(64)) {
        for (&x, &y) in ca.iter().zip(cb) {
            let d = x as f64 - y as f64;
            acc += d * d;
        }
        if acc > bound {
            return acc;
        }
    }
    acc
}

/// Squared norms of each row, in f64.
fn row_norms(rows: &[f32], width: usize) -> Vec<f64> {
    rows.chunks(width)
        .map(|r| r.iter().map(|&v| v as f64 * v as f64).sum())
        .collect()
}

/// f32 dot product with independent lanes so it vectorizes.
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    let tail: f32 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    lanes.iter().sum::<f32>() + tail
}

/// Index of the nearest row of `rows` (each `width` long) to `x`; ties go
/// to the lowest index. Distances are screened in f32 through
/// `|r|^2 - 2 r.x + |x|^2`; every row whose screened distance could be
/// the minimum under a bound on the f32 rounding error is then measured
/// exactly in f64, so the answer equals an exact exhaustive search.
fn nearest(rows: &[f32], norms: &[f64], width: usize, x: &[f32]) -> (usize, f64) {
    let xn: f64 = x.iter().map(|&v| v as f64 * v as f64).sum();
    // Each product and partial sum in f32 is off by at most a relative
    // unit roundoff per term; summing |r_k x_k| <= (|r|^2 + |x|^2) / 2 over
    // at most `width` terms bounds the dot error by this slack.
    let rel = 2.0 * (width as f64 + 2.0) * f32::EPSILON as f64;
    let mut screened = Vec::with_capacity(norms.len());
    let mut upper = f64::INFINITY;
    for (row, &rn) in rows.chunks(width).zip(norms) {
        let d = rn + xn - 2.0 * dot_f32(row, x) as f64;
        let slack = rel * (rn + xn) + 1e-30;
        upper = upper.min(d + slack);
        screened.push((d, slack));
    }
    let mut best = (0usize, f64::INFINITY);
    for (i, &(d, slack)) in screened.iter().enumerate() {
        if d - slack > upper {
            continue;
        }
        let exact = bounded_distance(&rows[i * width..(i + 1) * width], x, best.1);
        if exact < best.1 {
            best = (i, exact);
        }
    }
    best
}

impl Enumeration {
    pub fn new(gen: &dyn Generator) -> Self {
        let space = gen.state_space();
        let seq_len = gen.seq_len();
        let frame_len: usize = gen.frame_shape().iter().product();
        let rendered: Vec<Vec<f32>> = (0..space.len())
            .into_par_iter()
            .map(|i| gen.render(i, &space.config(i), true))
            .collect();
        let sequences = rendered.concat();
        let mut sequence_index = HashMap::new();
        let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut frames = Vec::new();
        let mut frame_source = Vec::new();
        for (i, seq) in rendered.iter().enumerate() {
            sequence_index.entry(key(seq)).or_insert(i);
            for frame in seq.chunks(frame_len) {
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key(frame)) {
                    e.insert(frame_source.len());
                    frames.extend_from_slice(frame);
                    frame_source.push(i);
                }
            }
        }
        let sample_len = seq_len * frame_len;
        Self {
            sequence_norms: row_norms(&sequences, sample_len),
            frame_norms: row_norms(&frames, frame_len),
            factors: gen.factors().to_vec(),
            space,
            seq_len,
            frame_len,
            sequences,
            frames,
            frame_source,
            sequence_index,
            frame_index: seen,
        }
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn sample_len(&self) -> usize {
        self.seq_len * self.frame_len
    }

    pub fn num_frames(&self) -> usize {
        self.frame_source.len()
    }

    pub fn config(&self, index: usize) -> Vec<u32> {
        self.space.config(index)
    }

    pub fn sequence(&self, index: usize) -> &[f32] {
        let s = self.sample_len();
        &self.sequences[index * s..(index + 1) * s]
    }

    /// Clean render of the configuration `labels`.
    pub fn render(&self, labels: &[u32]) -> Result<&[f32]> {
        Ok(self.sequence(self.space.index(labels)?))
    }

    fn check_len(&self, x: &[f32], want: usize, what: &str) -> Result<()> {
        if x.len() != want {
            return Err(Error::Shape(format!("{what} has {} values, expected {want}", x.len())));
        }
        Ok(())
    }

    /// Configuration index of the nearest clean sequence.
    pub fn nearest_sequence(&self, x: &[f32]) -> Result<usize> {
        self.check_len(x, self.sample_len(), "sequence")?;
        if let Some(&i) = self.sequence_index.get(&key(x)) {
            return Ok(i);
        }
        Ok(nearest(&self.sequences, &self.sequence_norms, self.sample_len(), x).0)
    }

    /// Labels of the nearest clean sequence.
    pub fn sequence_labels(&self, x: &[f32]) -> Result<Vec<u32>> {
        Ok(self.config(self.nearest_sequence(x)?))
    }

    /// Labels of the configuration whose clean frame is nearest to `frame`.
    /// Only static-factor entries are meaningful for a single frame.
    pub fn frame_labels(&self, frame: &[f32]) -> Result<Vec<u32>> {
        self.check_len(frame, self.frame_len, "frame")?;
        let j = match self.frame_index.get(&key(frame)) {
            Some(&j) => j,
            None => nearest(&self.frames, &self.frame_norms, self.frame_len, frame).0,
        };
        Ok(self.config(self.frame_source[j]))
    }

    pub fn is_static(&self, factor: usize) -> bool {
        self.factors[factor].kind == FactorKind::Static
    }

    /// Smallest L2 distance between two distinct clean sequences, by
    /// exhaustive comparison.
    pub fn min_pairwise_distance(&self) -> f64 {
        let s = self.sample_len();
        let n = self.len();
        let best = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = self.sequence(i);
                let mut best = f64::INFINITY;
                for j in i + 1..n {
                    let d = bounded_distance(a, &self.sequences[j * s..(j + 1) * s], best);
                    best = best.min(d);
                }
                best
            })
            .reduce(|| f64::INFINITY, f64::min);
        best.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Shapes2D16, Ts24};
    use crate::rng::Rng;

    fn brute(rows: &[f32], width: usize, x: &[f32]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, r) in rows.chunks(width).enumerate() {
            let d: f64 = r.iter().zip(x).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    #[test]
    fn screened_search_matches_brute_force() {
        let mut rng = Rng::new(11);
        let width = 37;
        let mut rows: Vec<f32> = (0..200 * width).map(|_| rng.next_f32()).collect();
        // Duplicates and near-duplicates stress the tie rule.
        let copy = rows[5 * width..6 * width].to_vec();
        rows[17 * width..18 * width].copy_from_slice(&copy);
        rows[40 * width] = copy[0] + 1e-6;
        let norms = row_norms(&rows, width);
        for q in 0..300 {
            let x: Vec<f32> = if q % 3 == 0 {
                copy.iter().map(|v| v + (rng.next_f32() - 0.5) * 1e-5).collect()
            } else {
                (0..width).map(|_| rng.next_f32() * 1.2 - 0.1).collect()
            };
            assert_eq!(nearest(&rows, &norms, width, &x).0, brute(&rows, width, &x));
        }
        assert_eq!(nearest(&rows, &norms, width, &copy).0, 5);
    }

    #[test]
    fn clean_renders_map_to_themselves() {
        let e = Enumeration::new(&Ts24::new(0, 0.0).unwrap());
        assert_eq!(e.len(), 720);
        for i in (0..720).step_by(37) {
            assert_eq!(e.nearest_sequence(e.sequence(i)).unwrap(), i);
        }
        let zeros = vec![0.0; e.sample_len()];
        assert_eq!(e.nearest_sequence(&zeros).unwrap(), e.nearest_sequence(&zeros).unwrap());
    }

    #[test]
    fn frames_carry_static_labels() {
        let e = Enumeration::new(&Shapes2D16::new());
        for i in (0..e.len()).step_by(53) {
            let cfg = e.config(i);
            for frame in e.sequence(i).chunks(e.frame_len()) {
                let got = e.frame_labels(frame).unwrap();
                for f in 0..cfg.len() {
                    if e.is_static(f) {
                        assert_eq!(got[f], cfg[f]);
                    }
                }
            }
        }
    }
}
