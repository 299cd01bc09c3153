use std::sync::Arc;

use msd_core::data::{generate, Enumeration, Generator, Shapes2D16};
use msd_core::judges::OracleJudge;
use msd_core::les::{predictor_les, predictor_les_from_latents, swap_les, swap_score, PredictorConfig, SwapConfig};
use msd_core::models::{AnalyticModel, ChannelRole, SequenceModel};
use msd_core::rng::Rng;
use msd_core::{Result, Tensor};

struct Fixture {
    enumeration: Arc<Enumeration>,
    ds: msd_core::data::Dataset,
    train: Vec<usize>,
}

fn fixture() -> Fixture {
    let gen = Shapes2D16::new();
    let enumeration = Arc::new(Enumeration::new(&gen));
    let ds = generate(&gen, 3, [0.7, 0.15, 0.15]).expect("dataset");
    let train = ds.split("train").expect("train split");
    Fixture { enumeration, ds, train }
}

/// Every factor is written into two channels; decoding averages the pair,
/// so replacing one channel of a pair only sometimes changes the factor
/// while replacing both always does.
struct DoubledModel(AnalyticModel);

impl SequenceModel for DoubledModel {
    fn name(&self) -> &str {
        "doubled"
    }
    fn seq_len(&self) -> usize {
        self.0.seq_len()
    }
    fn frame_len(&self) -> usize {
        self.0.frame_len()
    }
    fn latent_dim(&self) -> usize {
        2 * self.0.latent_dim()
    }
    fn channel_roles(&self) -> Vec<ChannelRole> {
        self.0.channel_roles().into_iter().flat_map(|r| [r, r]).collect()
    }
    fn is_variational(&self) -> bool {
        false
    }
    fn channels(&self, x: &[f32]) -> Result<Tensor> {
        let c = self.0.channels(x)?;
        let t = c.rows();
        let data = (0..t).flat_map(|i| c.row(i).iter().flat_map(|&v| [v, v]).collect::<Vec<_>>()).collect();
        Tensor::new(vec![t, 2 * c.cols()], data)
    }
    fn decode_channels(&self, c: &Tensor) -> Result<Vec<f32>> {
        let t = c.rows();
        let k = c.cols() / 2;
        let data = (0..t)
            .flat_map(|i| {
                let r = c.row(i);
                (0..k).map(move |j| 0.5 * (r[2 * j] + r[2 * j + 1]))
            })
            .collect();
        self.0.decode_channels(&Tensor::new(vec![t, k], data)?)
    }
}

fn identity_subsets(k: usize) -> Vec<Option<Vec<usize>>> {
    (0..k).map(|i| Some(vec![i])).collect()
}

#[test]
fn predictor_recovers_analytic_channels() {
    let fx = fixture();
    let model = AnalyticModel::new(fx.enumeration.clone());
    let map = predictor_les(&model, &fx.ds, &fx.train, &PredictorConfig::default()).unwrap();
    assert_eq!(map.subsets, identity_subsets(fx.ds.num_factors()));
    assert_eq!(map.overlap, 0);
    for row in &map.relevance {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn swap_recovers_analytic_channels_and_agrees_with_predictor() {
    let fx = fixture();
    let model = AnalyticModel::new(fx.enumeration.clone());
    let judge = OracleJudge::new(fx.enumeration.clone());
    let swap = swap_les(&model, &fx.ds, &fx.train, &judge, &SwapConfig::default()).unwrap();
    assert_eq!(swap.subsets, identity_subsets(fx.ds.num_factors()));
    let pred = predictor_les(&model, &fx.ds, &fx.train, &PredictorConfig::default()).unwrap();
    assert!(swap.same_assignment(&pred));
    for row in &swap.relevance {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn swap_is_deterministic() {
    let fx = fixture();
    let model = DoubledModel(AnalyticModel::new(fx.enumeration.clone()));
    let judge = OracleJudge::new(fx.enumeration.clone());
    let cfg = SwapConfig { pairs: 30, ..SwapConfig::default() };
    let a = swap_les(&model, &fx.ds, &fx.train, &judge, &cfg).unwrap();
    let b = swap_les(&model, &fx.ds, &fx.train, &judge, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn penalty_controls_subset_size() {
    let fx = fixture();
    let model = DoubledModel(AnalyticModel::new(fx.enumeration.clone()));
    let judge = OracleJudge::new(fx.enumeration.clone());
    let base = SwapConfig {
        pairs: 200,
        budget: 200_000,
        ..SwapConfig::default()
    };
    // A small penalty prefers the full pair, which always moves the factor.
    let small = swap_les(&model, &fx.ds, &fx.train, &judge, &SwapConfig { lambda: 0.05, ..base }).unwrap();
    for (f, s) in small.subsets.iter().enumerate() {
        assert_eq!(s.as_deref(), Some(&[2 * f, 2 * f + 1][..]), "factor {f}");
    }
    // Once a second channel costs more than it adds, only singletons win.
    let large = swap_les(&model, &fx.ds, &fx.train, &judge, &SwapConfig { lambda: 0.3, ..base }).unwrap();
    let located: Vec<&Vec<usize>> = large.subsets.iter().flatten().collect();
    assert!(!located.is_empty());
    assert!(located.iter().all(|s| s.len() == 1), "{:?}", large.subsets);
    let huge = swap_les(&model, &fx.ds, &fx.train, &judge, &SwapConfig { lambda: 5.0, ..base }).unwrap();
    assert!(huge.subsets.iter().all(Option::is_none));
}

#[test]
fn score_hand_values() {
    assert_eq!(swap_score(&[0.0, 0.0, 0.0], 0, 0, 0.05), 0.0);
    assert!((swap_score(&[1.0, 0.0, 0.0], 0, 1, 0.05) - 0.95).abs() < 1e-12);
    assert!((swap_score(&[0.6, 0.2, 0.4], 1, 3, 0.1) - (0.2 - 0.5 - 0.3)).abs() < 1e-12);
    assert!((swap_score(&[0.7], 0, 2, 0.05) - 0.6).abs() < 1e-12);
}

#[test]
fn tau_one_takes_every_informative_channel() {
    let mut rng = Rng::new(8);
    let n = 400;
    let factors = Shapes2D16::new().factors()[..2].to_vec();
    let mut latents = Vec::new();
    let mut labels = vec![Vec::new(), Vec::new()];
    for _ in 0..n {
        let a = rng.below(factors[0].cardinality()) as u32;
        let b = rng.below(factors[1].cardinality()) as u32;
        latents.extend([a as f32, b as f32, 0.0]);
        labels[0].push(a);
        labels[1].push(b);
    }
    let cfg = PredictorConfig { tau: 1.0, ..PredictorConfig::default() };
    let map = predictor_les_from_latents(&latents, 3, &labels, &factors, &cfg).unwrap();
    for (f, s) in map.subsets.iter().enumerate() {
        let nonzero: Vec<usize> = (0..3).filter(|&d| map.relevance[f][d] > 0.0).collect();
        let mut got = s.clone().unwrap();
        got.sort_unstable();
        assert_eq!(got, nonzero);
        assert!(!got.contains(&2));
    }
}

#[test]
fn noise_latents_are_flagged_low_confidence() {
    let mut rng = Rng::new(13);
    let (n, l) = (600, 8);
    let factors = Shapes2D16::new().factors()[..3].to_vec();
    let latents: Vec<f32> = (0..n * l).map(|_| rng.normal() as f32).collect();
    let labels: Vec<Vec<u32>> = factors
        .iter()
        .map(|f| (0..n).map(|_| rng.below(f.cardinality()) as u32).collect())
        .collect();
    let map = predictor_les_from_latents(&latents, l, &labels, &factors, &PredictorConfig::default()).unwrap();
    assert!(map.low_confidence.iter().all(|&c| c), "{:?}", map.relevance);
    for row in &map.relevance {
        let max = row.iter().cloned().fold(0.0, f64::max);
        assert!(max < 2.0 / l as f64);
    }
}
