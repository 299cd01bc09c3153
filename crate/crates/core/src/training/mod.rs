//! Seeded minibatch training with validation-based checkpointing, early
//! stopping and resumption.
//!
//! Output directory layout: `config.json` (normalized config),
//! `train_log.tsv`, `checkpoint/` (best validation loss so far) and
//! `state/` (latest weights plus optimizer moments, used to resume).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{read_container, Dataset, f32_bytes};
use crate::error::{Error, Result};
use crate::models::{load_checkpoint, save_checkpoint, Geometry, NeuralModel};
use crate::optim::Adam;
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

pub use config::{EarlyStopping, TrainingConfig};

/// Training order of epoch `epoch` (1-based).
pub fn epoch_order(seed: u64, epoch: usize, train: &[usize]) -> Vec<usize> {
    let mut order = train.to_vec();
    Rng::derived(seed, &format!("train/epoch/{epoch}")).shuffle(&mut order);
    order
}

/// Noise stream of batch `batch` in epoch `epoch`.
pub fn batch_rng(seed: u64, epoch: usize, batch: usize) -> Rng {
    Rng::derived(seed, &format!("train/batch/{epoch}/{batch}"))
}

/// Stacks samples `idx` into a `[n·T, o]` batch.
pub fn stack_batch(ds: &Dataset, idx: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(idx.len() * ds.manifest.sample_len());
    for &i in idx {
        data.extend_from_slice(ds.sequence(i));
    }
    Tensor::new(vec![idx.len() * ds.seq_len(), ds.frame_len()], data)
}

/// One epoch record of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: Vec<(String, f64)>,
    pub val_loss: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ResumeState {
    epoch: usize,
    adam_step: u64,
    best_val: Option<f64>,
    bad_epochs: usize,
    stopped: bool,
    log: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: Vec<EpochRecord>,
    pub stopped_early: bool,
}

pub fn geometry_of(ds: &Dataset) -> Geometry {
    Geometry {
        seq_len: ds.seq_len(),
        frame_len: ds.frame_len(),
        modality: ds.manifest.modality,
    }
}

/// Mean loss over `idx` in batches, with a fixed noise stream.
pub fn evaluate_loss(model: &NeuralModel, ds: &Dataset, idx: &[usize], batch_size: usize, seed: u64) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::Validation("cannot evaluate a loss on an empty split".into()));
    }
    let mut total = 0.0;
    for (b, chunk) in idx.chunks(batch_size).enumerate() {
        let x = stack_batch(ds, chunk)?;
        let mut tape = Tape::new();
        let mut rng = Rng::derived(seed, &format!("eval/batch/{b}"));
        let terms = model.loss(&model.params, &mut tape, &x, chunk.len(), &mut rng)?;
        total += terms.get("loss").unwrap_or(f64::NAN) * chunk.len() as f64;
    }
    let loss = total / idx.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("validation loss".into()));
    }
    Ok(loss)
}

fn fit_global(model: &mut NeuralModel, ds: &Dataset) -> Result<()> {
    if model.kind() == crate::models::ModelKind::Skd {
        let train = ds.split("train")?;
        let seqs: Vec<&[f32]> = train.iter().map(|&i| ds.sequence(i)).collect();
        model.fit_global_koopman(&seqs)?;
    }
    Ok(())
}

fn write_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut names: Vec<&str> = Vec::new();
    for r in log {
        for (n, _) in &r.train {
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
    }
    let mut out = String::from("epoch");
    for n in &names {
        out.push_str(&format!("\ttrain_{n}"));
    }
    out.push_str("\tval_loss\timproved\n");
    for r in log {
        out.push_str(&r.epoch.to_string());
        for n in &names {
            match r.train.iter().find(|(m, _)| m == n) {
                Some((_, v)) => out.push_str(&format!("\t{v:.8e}")),
                None => out.push_str("\t"),
            }
        }
        out.push_str(&format!("\t{:.8e}\t{}\n", r.val_loss, u8::from(r.improved)));
    }
    fs::write(path, out)?;
    Ok(())
}

fn save_state(dir: &Path, model: &NeuralModel, adam: &Adam, seed: u64, state: &ResumeState) -> Result<()> {
    save_checkpoint(model, seed, state.epoch, &dir.join("weights"))?;
    let mut blob = Vec::new();
    for t in adam.m.iter().chain(&adam.v) {
        blob.extend(f32_bytes(t.data()));
    }
    fs::write(dir.join("adam.bin"), blob)?;
    fs::write(dir.join("state.json"), serde_json::to_string_pretty(state)?)?;
    Ok(())
}

fn load_state(dir: &Path, adam: &mut Adam) -> Result<(NeuralModel, ResumeState)> {
    let state: ResumeState = serde_json::from_str(&fs::read_to_string(dir.join("state.json"))?)?;
    let (model, _) = load_checkpoint(&dir.join("weights"))?;
    let blob = fs::read(dir.join("adam.bin"))?;
    let total: usize = adam.m.iter().chain(&adam.v).map(|t| t.len()).sum();
    if blob.len() != total * 4 {
        return Err(Error::Format("optimizer state does not match the model".into()));
    }
    let mut vals = blob.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    for t in adam.m.iter_mut().chain(adam.v.iter_mut()) {
        for slot in t.data_mut() {
            *slot = vals.next().expect("length checked");
        }
    }
    adam.step = state.adam_step;
    Ok((model, state))
}

/// Trains per `cfg` on the dataset at `cfg.dataset`, writing into `out`.
pub fn train(cfg: &TrainingConfig, out: &Path) -> Result<TrainOutcome> {
    let ds = read_container(&cfg.dataset)?;
    train_on(cfg, &ds, out)
}

/// Trains on an in-memory dataset. An existing `state/` under `out` from
/// the same config is resumed.
pub fn train_on(cfg: &TrainingConfig, ds: &Dataset, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let config_json = serde_json::to_string_pretty(&cfg.to_json())? + "\n";
    let config_path = out.join("config.json");
    let state_dir = out.join("state");
    let ckpt_dir = out.join("checkpoint");
    let resuming = state_dir.join("state.json").exists();
    if resuming && fs::read_to_string(&config_path).ok().as_deref() != Some(config_json.as_str()) {
        return Err(Error::Config(format!(
            "{} holds a run with a different config; use a fresh output directory",
            out.display()
        )));
    }
    fs::write(&config_path, &config_json)?;

    let train_idx = ds.split("train")?;
    let val_idx = ds.split("val")?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Validation("training needs non-empty train and val splits".into()));
    }
    let mut model = NeuralModel::new(cfg.model.clone(), geometry_of(ds), cfg.seed)?;
    let mut adam = Adam::new(cfg.optimizer, &model.params);
    let mut state = ResumeState {
        epoch: 0,
        adam_step: 0,
        best_val: None,
        bad_epochs: 0,
        stopped: false,
        log: Vec::new(),
    };
    if resuming {
        let (m, s) = load_state(&state_dir, &mut adam)?;
        model = m;
        state = s;
    } else {
        let mut init = model.clone();
        fit_global(&mut init, ds)?;
        save_checkpoint(&init, cfg.seed, 0, &ckpt_dir)?;
    }

    let started = Instant::now();
    let val_seed = derive_seed(cfg.seed, "train/val");
    while state.epoch < cfg.epochs && !state.stopped {
        let epoch = state.epoch + 1;
        let order = epoch_order(cfg.seed, epoch, &train_idx);
        let mut sums: Vec<(String, f64)> = Vec::new();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = stack_batch(ds, chunk)?;
            let mut tape = Tape::new();
            let mut rng = batch_rng(cfg.seed, epoch, b);
            let terms = model.loss(&model.params, &mut tape, &x, chunk.len(), &mut rng)?;
            let loss = terms.get("loss").unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {b}: {:?}",
                    terms.terms
                )));
            }
            let grads = tape.backward(terms.total, &model.params).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            })?;
            adam.step(&mut model.params, &grads)?;
            for (name, v) in terms.terms {
                let w = v * chunk.len() as f64;
                match sums.iter_mut().find(|(n, _)| n == name) {
                    Some(slot) => slot.1 += w,
                    None => sums.push((name.to_string(), w)),
                }
            }
        }
        for s in &mut sums {
            s.1 /= train_idx.len() as f64;
        }
        let val_loss = evaluate_loss(&model, ds, &val_idx, cfg.batch_size, val_seed)?;
        let improved = state
            .best_val
            .is_none_or(|best| val_loss < best - cfg.early_stopping.min_delta);
        if improved {
            state.best_val = Some(val_loss);
            state.bad_epochs = 0;
            let mut best = model.clone();
            fit_global(&mut best, ds)?;
            save_checkpoint(&best, cfg.seed, epoch, &ckpt_dir)?;
        } else {
            state.bad_epochs += 1;
            if state.bad_epochs >= cfg.early_stopping.patience {
                state.stopped = true;
            }
        }
        state.epoch = epoch;
        state.adam_step = adam.step;
        state.log.push(EpochRecord {
            epoch,
            train: sums,
            val_loss,
            improved,
        });
        if let Some(limit) = cfg.max_seconds {
            if started.elapsed().as_secs_f64() >= limit {
                state.stopped = true;
            }
        }
        write_log(&out.join("train_log.tsv"), &state.log)?;
        save_state(&state_dir, &model, &adam, cfg.seed, &state)?;
    }
    write_log(&out.join("train_log.tsv"), &state.log)?;
    Ok(TrainOutcome {
        checkpoint: ckpt_dir,
        stopped_early: state.stopped,
        log: state.log,
    })
}
