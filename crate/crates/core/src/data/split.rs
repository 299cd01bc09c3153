use crate::data::Splits;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Seeded shuffle of `0..n` cut into train/val/test of sizes
/// `round(r0·n)`, `round(r1·n)` and the remainder.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_val = (ratios[1] * n as f64).round() as usize;
    if n_train + n_val >= n || n_train == 0 || n_val == 0 {
        return Err(Error::Config(format!(
            "ratios {ratios:?} over {n} samples leave an empty split"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut idx);
    Ok(Splits {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    })
}
