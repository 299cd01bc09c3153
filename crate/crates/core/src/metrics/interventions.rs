//! Swap and resampling interventions scored by a judge.
//!
//! Every trial draws from its own stream, `Rng::derived(seed, "<metric>/<trial>")`,
//! so trials run in parallel and still reproduce exactly. A trial that
//! fails (encode, decode or judge error) is skipped and counted; a metric
//! whose skip rate exceeds `max_failure_rate` aborts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FactorKind};
use crate::error::{Error, Result};
use crate::judges::Judge;
use crate::les::FactorMap;
use crate::metrics::{c_sample, c_swap_sequence, gc_sample, AccuracyMatrix};
use crate::models::{read_channels, sample_latent, swap_channels, write_channels, LatentBank, SequenceModel};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialStats {
    pub attempted: usize,
    pub skipped: usize,
    pub first_error: Option<String>,
}

impl TrialStats {
    pub fn merge(&mut self, other: &TrialStats) {
        self.attempted += other.attempted;
        self.skipped += other.skipped;
        if self.first_error.is_none() {
            self.first_error.clone_from(&other.first_error);
        }
    }
}

/// Everything an intervention metric reads.
pub struct EvalContext<'a> {
    pub model: &'a dyn SequenceModel,
    pub judge: &'a dyn Judge,
    pub map: &'a FactorMap,
    pub dataset: &'a Dataset,
    pub bank: &'a LatentBank,
    /// One floor per factor.
    pub floors: Vec<f64>,
    pub max_failure_rate: f64,
    /// Evaluation samples that encoded, with their channel tracks.
    samples: Vec<usize>,
    tracks: Vec<Tensor>,
    /// Samples that failed to encode.
    pub invalid_samples: usize,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        model: &'a dyn SequenceModel,
        judge: &'a dyn Judge,
        map: &'a FactorMap,
        dataset: &'a Dataset,
        samples: &[usize],
        bank: &'a LatentBank,
        floors: Vec<f64>,
    ) -> Result<Self> {
        let k = dataset.num_factors();
        if judge.factors() != dataset.factors() || map.factors.as_slice() != dataset.factors() {
            return Err(Error::Validation("judge, factor map and dataset disagree on the factors".into()));
        }
        if map.latent_dim != model.latent_dim() {
            return Err(Error::Validation(format!(
                "factor map covers {} channels but the model has {}",
                map.latent_dim,
                model.latent_dim()
            )));
        }
        if floors.len() != k || floors.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Validation("one floor in (0, 1) is needed per factor".into()));
        }
        let encoded: Vec<Option<Tensor>> = samples
            .par_iter()
            .map(|&i| model.channels(dataset.sequence(i)).ok())
            .collect();
        let mut kept = Vec::new();
        let mut tracks = Vec::new();
        for (&i, t) in samples.iter().zip(encoded) {
            if let Some(t) = t {
                kept.push(i);
                tracks.push(t);
            }
        }
        if kept.len() < 2 {
            return Err(Error::Degenerate("fewer than two evaluation samples could be encoded".into()));
        }
        Ok(Self {
            model,
            judge,
            map,
            dataset,
            bank,
            floors,
            max_failure_rate: 0.1,
            invalid_samples: samples.len() - kept.len(),
            samples: kept,
            tracks,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn labels(&self, s: usize) -> &[u32] {
        self.dataset.labels(self.samples[s])
    }

    fn frames<'x>(&self, x: &'x [f32]) -> impl Iterator<Item = &'x [f32]> {
        x.chunks(self.model.frame_len())
    }

    fn run<T: Send>(&self, name: &str, n: usize, seed: u64, trial: impl Fn(usize, &mut Rng) -> Result<T> + Sync) -> Result<(Vec<T>, TrialStats)> {
        let results: Vec<Result<T>> = (0..n)
            .into_par_iter()
            .map(|t| trial(t, &mut Rng::derived(seed, &format!("{name}/{t}"))))
            .collect();
        let mut stats = TrialStats {
            attempted: n,
            ..TrialStats::default()
        };
        let mut kept = Vec::with_capacity(n);
        for r in results {
            match r {
                Ok(v) => kept.push(v),
                Err(e) => {
                    stats.skipped += 1;
                    if stats.first_error.is_none() {
                        stats.first_error = Some(e.to_string());
                    }
                }
            }
        }
        if n > 0 && (kept.is_empty() || stats.skipped as f64 > self.max_failure_rate * n as f64) {
            return Err(Error::Protocol(format!(
                "{name}: {} of {n} trials failed, above the {:.0}% limit; first error: {}",
                stats.skipped,
                self.max_failure_rate * 100.0,
                stats.first_error.as_deref().unwrap_or("none")
            )));
        }
        Ok((kept, stats))
    }

    /// Channels to take from a donor while factor `frozen` keeps its own.
    /// Unlocated factors own no channels.
    fn complement(&self, frozen: usize) -> Vec<usize> {
        let keep = self.map.subset(frozen).unwrap_or(&[]);
        let mut out: Vec<usize> = (0..self.map.factors.len())
            .filter(|&j| j != frozen)
            .flat_map(|j| self.map.subset(j).unwrap_or(&[]).iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out.retain(|d| !keep.contains(d));
        out
    }

    /// Static and dynamic channel groups: the unions of the static and of
    /// the dynamic factors' subsets. They overlap when the map does, so an
    /// intervention on one group also moves the shared channels.
    fn groups(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let s = self.map.group(FactorKind::Static);
        let d = self.map.group(FactorKind::Dynamic);
        if s.is_empty() || d.is_empty() {
            return Err(Error::Validation("both a static and a dynamic channel group are required".into()));
        }
        Ok((s, d))
    }

    fn static_factors(&self) -> Vec<usize> {
        self.map
            .factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FactorKind::Static)
            .map(|(i, _)| i)
            .collect()
    }
}

fn sum_ratio(parts: &[(usize, usize)]) -> f64 {
    let (c, t) = parts.iter().fold((0, 0), |(c, t), &(a, b)| (c + a, t + b));
    if t == 0 {
        0.0
    } else {
        c as f64 / t as f64
    }
}

/// Cross-composes pairs by exchanging the dynamic group and checks that
/// each factor follows the sample it came from.
pub fn two_swap(ctx: &EvalContext, pairs: usize, seed: u64) -> Result<(f64, TrialStats)> {
    let (_, dynamic) = ctx.groups()?;
    let factors = &ctx.map.factors;
    let (parts, stats) = ctx.run("two-swap", pairs, seed, |_, rng| {
        let (a, b) = rng.distinct_pair(ctx.num_samples());
        let (x1, x2) = swap_channels(&ctx.tracks[a], &ctx.tracks[b], &dynamic)?;
        let y1 = ctx.judge.judge_all(&ctx.model.decode_channels(&x1)?)?;
        let y2 = ctx.judge.judge_all(&ctx.model.decode_channels(&x2)?)?;
        let (la, lb) = (ctx.labels(a), ctx.labels(b));
        let mut correct = 0;
        for (f, spec) in factors.iter().enumerate() {
            let (s1, s2) = match spec.kind {
                FactorKind::Static => (la[f], lb[f]),
                FactorKind::Dynamic => (lb[f], la[f]),
            };
            correct += (y1[f] == s1) as usize + (y2[f] == s2) as usize;
        }
        Ok((correct, 2 * factors.len()))
    })?;
    Ok((sum_ratio(&parts), stats))
}

/// Resamples one group and checks that the other group's factors keep
/// their source labels. Each trial resamples the dynamic group once and
/// the static group once.
pub fn two_gsample(ctx: &EvalContext, samples: usize, seed: u64) -> Result<(f64, TrialStats)> {
    let (stat, dynamic) = ctx.groups()?;
    let factors = &ctx.map.factors;
    let (parts, stats) = ctx.run("two-gsample", samples, seed, |_, rng| {
        let a = rng.below(ctx.num_samples());
        let la = ctx.labels(a);
        let mut correct = 0;
        let mut total = 0;
        for (resampled, preserved) in [(&dynamic, FactorKind::Static), (&stat, FactorKind::Dynamic)] {
            let mut c = ctx.tracks[a].clone();
            write_channels(&mut c, resampled, &sample_latent(ctx.model, ctx.bank, resampled, rng)?)?;
            let y = ctx.judge.judge_all(&ctx.model.decode_channels(&c)?)?;
            for (f, spec) in factors.iter().enumerate() {
                if spec.kind == preserved {
                    correct += (y[f] == la[f]) as usize;
                    total += 1;
                }
            }
        }
        Ok((correct, total))
    })?;
    Ok((sum_ratio(&parts), stats))
}

fn accuracy_matrix(ctx: &EvalContext, rows: Vec<(usize, Vec<bool>)>) -> Result<AccuracyMatrix> {
    let k = ctx.map.factors.len();
    let mut hits = vec![vec![0usize; k]; k];
    let mut trials = vec![0usize; k];
    for (i, row) in rows {
        trials[i] += 1;
        for (j, ok) in row.into_iter().enumerate() {
            hits[i][j] += ok as usize;
        }
    }
    let values = hits
        .iter()
        .zip(&trials)
        .map(|(h, &t)| h.iter().map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 }).collect())
        .collect();
    let mut m = AccuracyMatrix::new(values, ctx.floors.clone())?;
    m.trials = trials;
    m.overlap_warning = ctx.map.overlap > 0;
    Ok(m)
}

fn judged_against(ctx: &EvalContext, x: &[f32], source: &[u32]) -> Result<Vec<bool>> {
    Ok(ctx.judge.judge_all(x)?.iter().zip(source).map(|(y, s)| y == s).collect())
}

/// Freezes one factor at a time, copies every other factor's channels from
/// a random donor, and judges all factors against the source labels.
pub fn m_swap(ctx: &EvalContext, trials: usize, seed: u64) -> Result<(AccuracyMatrix, TrialStats)> {
    let k = ctx.map.factors.len();
    let copies: Vec<Vec<usize>> = (0..k).map(|i| ctx.complement(i)).collect();
    let (rows, stats) = ctx.run("m-swap", k * trials, seed, |t, rng| {
        let i = t / trials;
        let (a, b) = rng.distinct_pair(ctx.num_samples());
        let mut c = ctx.tracks[a].clone();
        write_channels(&mut c, &copies[i], &read_channels(&ctx.tracks[b], &copies[i])?)?;
        Ok((i, judged_against(ctx, &ctx.model.decode_channels(&c)?, ctx.labels(a))?))
    })?;
    Ok((accuracy_matrix(ctx, rows)?, stats))
}

/// Frame-level consistency of the sequences generated by [`m_gsample`],
/// per static factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedConsistency {
    pub factors: Vec<usize>,
    pub c_sample: Vec<f64>,
    pub gc_sample: Vec<f64>,
}

impl GeneratedConsistency {
    pub fn c_sample_mean(&self) -> f64 {
        self.c_sample.iter().sum::<f64>() / self.c_sample.len().max(1) as f64
    }

    pub fn gc_sample_mean(&self) -> f64 {
        self.gc_sample.iter().sum::<f64>() / self.gc_sample.len().max(1) as f64
    }
}

/// [`m_swap`] with resampled values in place of donor channels. With
/// `frames`, every generated sequence is also judged frame by frame for
/// the consistency of its static factors.
pub fn m_gsample(
    ctx: &EvalContext,
    trials: usize,
    seed: u64,
    frames: bool,
) -> Result<(AccuracyMatrix, Option<GeneratedConsistency>, TrialStats)> {
    let k = ctx.map.factors.len();
    let statics = ctx.static_factors();
    let frames = frames && !statics.is_empty();
    let copies: Vec<Vec<usize>> = (0..k).map(|i| ctx.complement(i)).collect();
    let (rows, stats) = ctx.run("m-gsample", k * trials, seed, |t, rng| {
        let i = t / trials;
        let a = rng.below(ctx.num_samples());
        let mut c = ctx.tracks[a].clone();
        write_channels(&mut c, &copies[i], &sample_latent(ctx.model, ctx.bank, &copies[i], rng)?)?;
        let x = ctx.model.decode_channels(&c)?;
        let row = judged_against(ctx, &x, ctx.labels(a))?;
        let consistency = if frames {
            let per_frame: Vec<Vec<Option<u32>>> =
                ctx.frames(&x).map(|fr| ctx.judge.judge_frame_all(fr)).collect::<Result<_>>()?;
            let mut scores = Vec::with_capacity(statics.len());
            for &f in &statics {
                let seq: Vec<u32> = per_frame
                    .iter()
                    .map(|fl| fl[f].ok_or_else(|| Error::Protocol("frame judge skipped a static factor".into())))
                    .collect::<Result<_>>()?;
                scores.push((c_sample(&seq)?, gc_sample(&seq)?));
            }
            Some(scores)
        } else {
            None
        };
        Ok(((i, row), consistency))
    })?;
    let mut matrix_rows = Vec::with_capacity(rows.len());
    let mut sums = vec![(0.0, 0.0); statics.len()];
    let mut count = 0usize;
    for (row, cons) in rows {
        matrix_rows.push(row);
        if let Some(cons) = cons {
            count += 1;
            for (s, (c, g)) in sums.iter_mut().zip(cons) {
                s.0 += c;
                s.1 += g;
            }
        }
    }
    let consistency = frames.then(|| GeneratedConsistency {
        factors: statics.clone(),
        c_sample: sums.iter().map(|s| s.0 / count as f64).collect(),
        gc_sample: sums.iter().map(|s| s.1 / count as f64).collect(),
    });
    Ok((accuracy_matrix(ctx, matrix_rows)?, consistency, stats))
}

/// Swaps each static factor's channels between pairs and measures the
/// share of frames showing the donor's label, per static factor.
pub fn c_swap(ctx: &EvalContext, pairs: usize, seed: u64) -> Result<(Vec<(usize, f64)>, TrialStats)> {
    let statics = ctx.static_factors();
    if statics.is_empty() {
        return Err(Error::Validation("C-Swap needs at least one static factor".into()));
    }
    let mut out = Vec::with_capacity(statics.len());
    let mut all = TrialStats::default();
    for &f in &statics {
        let subset = ctx.map.subset(f).unwrap_or(&[]);
        let (scores, stats) = ctx.run(&format!("c-swap/{f}"), pairs, seed, |_, rng| {
            let (a, b) = rng.distinct_pair(ctx.num_samples());
            let (x1, x2) = swap_channels(&ctx.tracks[a], &ctx.tracks[b], subset)?;
            let mut total = 0.0;
            for (x, donor) in [(x1, ctx.labels(b)[f]), (x2, ctx.labels(a)[f])] {
                let x = ctx.model.decode_channels(&x)?;
                let labels: Vec<u32> = ctx.frames(&x).map(|fr| ctx.judge.judge_frame(fr, f)).collect::<Result<_>>()?;
                total += c_swap_sequence(&labels, donor)?;
            }
            Ok(total / 2.0)
        })?;
        all.merge(&stats);
        out.push((f, scores.iter().sum::<f64>() / scores.len() as f64));
    }
    Ok((out, all))
}
