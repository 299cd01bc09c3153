//! 16×16 RGB sequences of a single 4×4 glyph moving on a torus.
//!
//! Static factors: color, shape and start cell (a 3×3 grid of anchor
//! positions). Dynamic factors: motion pattern and speed. A 2×2 gray
//! marker stays at the start cell in every frame, and speed also sets the
//! glyph brightness, so every factor value leaves a visible trace.

use crate::data::{FactorKind, FactorSpec, Generator, Modality};

pub const SIZE: usize = 16;
pub const SEQ_LEN: usize = 8;
const GLYPH: usize = 4;
const CELL_ORIGINS: [usize; 3] = [0, 6, 12];
const MARKER_LEVEL: f32 = 0.25;

const COLORS: [[f32; 3]; 4] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
const BRIGHTNESS: [f32; 2] = [1.0, 0.6];

const SHAPES: [[[u8; GLYPH]; GLYPH]; 3] = [
    [[1, 1, 1, 1], [1, 1, 1, 1], [1, 1, 1, 1], [1, 1, 1, 1]],
    [[1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 1, 0], [1, 0, 0, 1]],
    [[1, 0, 0, 0], [1, 1, 0, 0], [1, 1, 1, 0], [1, 1, 1, 1]],
];

/// Factor order within a configuration.
pub const COLOR: usize = 0;
pub const SHAPE: usize = 1;
pub const START: usize = 2;
pub const MOTION: usize = 3;
pub const SPEED: usize = 4;

#[derive(Debug, Clone)]
pub struct Shapes2D16 {
    factors: Vec<FactorSpec>,
}

impl Default for Shapes2D16 {
    fn default() -> Self {
        Self::new()
    }
}

impl Shapes2D16 {
    pub fn new() -> Self {
        let factors = vec![
            FactorSpec::new("color", FactorKind::Static, &["red", "green", "blue", "yellow"]),
            FactorSpec::new("shape", FactorKind::Static, &["square", "cross", "triangle"]),
            FactorSpec::new(
                "start_cell",
                FactorKind::Static,
                &["r0c0", "r0c1", "r0c2", "r1c0", "r1c1", "r1c2", "r2c0", "r2c1", "r2c2"],
            ),
            FactorSpec::new(
                "motion",
                FactorKind::Dynamic,
                &["left", "right", "up", "down", "orbit", "none"],
            ),
            FactorSpec::new("speed", FactorKind::Dynamic, &["1", "2"]),
        ];
        Self { factors }
    }

    /// Glyph offset `(rows, cols)` from the start cell at step `t`.
    pub fn displacement(motion: u32, speed: u32, t: usize) -> (isize, isize) {
        let step = 2 * (speed as isize + 1);
        let t = t as isize;
        match motion {
            0 => (0, -step * t),
            1 => (0, step * t),
            2 => (-step * t, 0),
            3 => (step * t, 0),
            4 => [(0, 0), (0, step), (step, step), (step, 0)][(t % 4) as usize],
            _ => (0, 0),
        }
    }

    /// One `[3, 16, 16]` frame.
    pub fn render_frame(labels: &[u32], t: usize) -> Vec<f32> {
        let plane = SIZE * SIZE;
        let mut frame = vec![0.0f32; 3 * plane];
        let (color, shape, start) = (labels[COLOR] as usize, labels[SHAPE] as usize, labels[START] as usize);
        let (motion, speed) = (labels[MOTION], labels[SPEED]);
        let r0 = CELL_ORIGINS[start / 3];
        let c0 = CELL_ORIGINS[start % 3];
        let (dr, dc) = Self::displacement(motion, speed, t);
        let level = BRIGHTNESS[speed as usize];
        let wrap = |base: usize, off: isize, k: usize| (base as isize + off + k as isize).rem_euclid(SIZE as isize) as usize;
        for (gr, row) in SHAPES[shape].iter().enumerate() {
            for (gc, &on) in row.iter().enumerate() {
                if on == 0 {
                    continue;
                }
                let r = wrap(r0, dr, gr);
                let c = wrap(c0, dc, gc);
                for (ch, &v) in COLORS[color].iter().enumerate() {
                    frame[ch * plane + r * SIZE + c] = v * level;
                }
            }
        }
        for r in r0..r0 + 2 {
            for c in c0..c0 + 2 {
                for ch in 0..3 {
                    frame[ch * plane + r * SIZE + c] = MARKER_LEVEL;
                }
            }
        }
        frame
    }
}

impl Generator for Shapes2D16 {
    fn name(&self) -> &str {
        "shapes2d16"
    }

    fn modality(&self) -> Modality {
        Modality::Video
    }

    fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    fn seq_len(&self) -> usize {
        SEQ_LEN
    }

    fn frame_shape(&self) -> Vec<usize> {
        vec![3, SIZE, SIZE]
    }

    fn render(&self, _config_index: usize, labels: &[u32], _clean: bool) -> Vec<f32> {
        let mut out = Vec::with_capacity(SEQ_LEN * 3 * SIZE * SIZE);
        for t in 0..SEQ_LEN {
            out.extend(Self::render_frame(labels, t));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motionless_sequence_repeats_its_frame() {
        let g = Shapes2D16::new();
        let seq = g.render(0, &[1, 2, 4, 5, 1], false);
        let f = 3 * SIZE * SIZE;
        for t in 1..SEQ_LEN {
            assert_eq!(&seq[..f], &seq[t * f..(t + 1) * f]);
        }
    }

    #[test]
    fn values_in_unit_range() {
        let g = Shapes2D16::new();
        for cfg in g.state_space().iter().step_by(37) {
            assert!(g.render(0, &cfg, false).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn orbit_returns_after_four_steps() {
        for t in 0..4 {
            assert_eq!(Shapes2D16::displacement(4, 1, t), Shapes2D16::displacement(4, 1, t + 4));
        }
    }
}
