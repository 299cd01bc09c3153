mod common;

use msd_core::data::{FactorKind, FactorSpec};
use msd_core::les::FactorMap;
use msd_core::metrics::{
    aggregate, dci, dci_from_relevance, empirical_floor, leaderboard, noise_floor, summarize_matrix, DciConfig,
    MetricReport, Metric, SummaryMode,
};
use msd_core::rng::Rng;
use proptest::prelude::*;

#[test]
fn sequence_formulas_match_brute_force() {
    let (cases, bad) = common::oracles::check_sequence_formulas();
    assert!(cases > 100, "{cases}");
    assert!(bad.is_empty(), "{:?}", &bad[..bad.len().min(5)]);
}

#[test]
fn matrix_summary_matches_brute_force() {
    let (cases, bad) = common::oracles::check_matrix_summaries();
    assert!(cases > 1000, "{cases}");
    assert!(bad.is_empty(), "{:?}", &bad[..bad.len().min(5)]);
}

#[test]
fn hand_computed_values() {
    assert_eq!(noise_floor(4).unwrap(), 0.25);
    assert_eq!(noise_floor(2).unwrap(), 0.5);
    assert!(noise_floor(1).is_err());
    assert_eq!(empirical_floor(&[0, 0, 0, 1], 2).unwrap(), 0.75);
    let m = |a: [[f64; 2]; 2], f: f64| summarize_matrix(&a.map(Vec::from).to_vec(), &[f, f], SummaryMode::Mean).unwrap();
    assert!((m([[1.0, 0.25], [0.25, 1.0]], 0.25) - 1.0).abs() < 1e-12);
    assert!((m([[0.5, 1.0], [1.0, 0.5]], 0.5) - 0.25).abs() < 1e-12);
    assert!(summarize_matrix(&[vec![1.0]], &[1.0], SummaryMode::Mean).is_err());
    let (dm, dc, _, _) = dci_from_relevance(&[vec![0.9, 0.1], vec![0.1, 0.9]], &[]).unwrap();
    assert!((dm - 0.531).abs() < 1e-3 && (dc - 0.531).abs() < 1e-3);
}

#[test]
fn single_sprites_row_aggregates_to_its_summary() {
    let values = [0.94, 0.97, 0.94, 0.96, 0.89, 0.95, 0.98, 0.95, 0.96, 0.97];
    assert!((aggregate(&values).unwrap() - 0.951).abs() < 1e-12);
    let r = MetricReport::from_values("m", "d", &[(Metric::DciE, 0.7)]).unwrap();
    assert_eq!(r.score, 0.7);
    let board = leaderboard(&[r]).unwrap();
    assert_eq!(board.metric_score("m", Metric::DciE), Some(0.7));
}

fn factors(cards: &[usize]) -> Vec<FactorSpec> {
    cards
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let labels: Vec<String> = (0..c).map(|v| v.to_string()).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            FactorSpec::new(&format!("f{i}"), FactorKind::Static, &refs)
        })
        .collect()
}

/// Latents where channel pair `2i, 2i+1` carries factor `i` with noise.
/// Labels cycle through the full factorial design so that factors are
/// exactly independent of each other.
fn synthetic(n: usize, cards: &[usize], noise: f32, seed: u64) -> (Vec<f32>, Vec<Vec<u32>>) {
    let mut rng = Rng::new(seed);
    let k = cards.len();
    let mut labels: Vec<Vec<u32>> = vec![Vec::with_capacity(n); k];
    for s in 0..n {
        let mut rest = s;
        for f in 0..k {
            labels[f].push((rest % cards[f]) as u32);
            rest /= cards[f];
        }
    }
    let mut lat = Vec::with_capacity(n * 2 * k);
    for s in 0..n {
        for f in 0..k {
            for _ in 0..2 {
                lat.push(labels[f][s] as f32 + noise * rng.normal() as f32);
            }
        }
    }
    (lat, labels)
}

#[test]
fn dci_on_separated_latents_is_high() {
    let cards = [3, 2, 4];
    let (lat, labels) = synthetic(24 * 40, &cards, 0.05, 1);
    let map = FactorMap::new(
        "test",
        6,
        factors(&cards),
        vec![Some(vec![0, 1]), Some(vec![2, 3]), Some(vec![4, 5])],
        vec![vec![1.0 / 6.0; 6]; 3],
    )
    .unwrap();
    let floors: Vec<f64> = cards.iter().map(|&c| 1.0 / c as f64).collect();
    let r = dci(&lat, 6, &labels, &map, &floors, &DciConfig::default(), 7).unwrap();
    // Chance-level leaks of about 1% already cost several points of entropy.
    assert!(r.modularity > 0.9 && r.compactness > 0.9 && r.explicitness > 0.95, "{r:?}");
}

#[test]
fn dci_is_invariant_to_factor_order() {
    let cards = [3, 2, 4];
    let (lat, labels) = synthetic(240, &cards, 0.6, 2);
    let subsets = vec![Some(vec![0, 1]), Some(vec![1, 2, 3]), Some(vec![4, 5])];
    let fs = factors(&cards);
    let floors: Vec<f64> = cards.iter().map(|&c| 1.0 / c as f64).collect();
    let rel = vec![vec![1.0 / 6.0; 6]; 3];
    let map = FactorMap::new("test", 6, fs.clone(), subsets.clone(), rel.clone()).unwrap();
    let base = dci(&lat, 6, &labels, &map, &floors, &DciConfig::default(), 3).unwrap();
    let perm = [2, 0, 1];
    let pick = |v: &[_]| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
    let map2 = FactorMap::new(
        "test",
        6,
        perm.iter().map(|&p| fs[p].clone()).collect(),
        perm.iter().map(|&p| subsets[p].clone()).collect(),
        rel,
    )
    .unwrap();
    let labels2: Vec<Vec<u32>> = perm.iter().map(|&p| labels[p].clone()).collect();
    let other = dci(&lat, 6, &labels2, &map2, &pick(&floors), &DciConfig::default(), 3).unwrap();
    for (a, b) in [
        (base.modularity, other.modularity),
        (base.compactness, other.compactness),
        (base.explicitness, other.explicitness),
    ] {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    for (i, &p) in perm.iter().enumerate() {
        for (j, &q) in perm.iter().enumerate() {
            assert_eq!(other.relevance[i][j], base.relevance[p][q]);
        }
    }
}

proptest! {
    #[test]
    fn summary_lies_in_unit_interval(
        k in 1usize..5,
        cells in proptest::collection::vec(0.0f64..=1.0, 16),
        floor_seed in proptest::collection::vec(0.05f64..0.95, 4),
    ) {
        let a: Vec<Vec<f64>> = (0..k).map(|i| cells[i * k..(i + 1) * k].to_vec()).collect();
        let floors = &floor_seed[..k];
        for mode in [SummaryMode::Mean, SummaryMode::geometric()] {
            let v = summarize_matrix(&a, floors, mode).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn summary_is_one_only_at_the_ideal(
        k in 2usize..5,
        cells in proptest::collection::vec(0.0f64..=1.0, 16),
        floor_seed in proptest::collection::vec(0.05f64..0.95, 4),
    ) {
        let floors = &floor_seed[..k];
        let ideal: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { floors[j] }).collect()).collect();
        prop_assert!((summarize_matrix(&ideal, floors, SummaryMode::Mean).unwrap() - 1.0).abs() < 1e-12);
        let a: Vec<Vec<f64>> = (0..k).map(|i| cells[i * k..(i + 1) * k].to_vec()).collect();
        let is_ideal = (0..k).all(|i| (0..k).all(|j| (a[i][j] - ideal[i][j]).abs() < 1e-12));
        if !is_ideal {
            prop_assert!(summarize_matrix(&a, floors, SummaryMode::Mean).unwrap() < 1.0);
        }
    }

    #[test]
    fn dci_scores_lie_in_unit_interval(q in proptest::collection::vec(0.0f64..1.0, 9), e in proptest::collection::vec(0.0f64..1.0, 3)) {
        let rows: Vec<Vec<f64>> = q.chunks(3).map(<[f64]>::to_vec).collect();
        let (m, c, ex, _) = dci_from_relevance(&rows, &e).unwrap();
        for v in [m, c, ex] {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn consistency_scores_lie_in_unit_interval(s in proptest::collection::vec(0u32..4, 2..12)) {
        let a = msd_core::metrics::c_sample(&s).unwrap();
        let b = msd_core::metrics::gc_sample(&s).unwrap();
        let c = msd_core::metrics::c_swap_sequence(&s, s[0]).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && c > 0.0 && c <= 1.0);
        prop_assert!(b >= 1.0 / s.len() as f64);
    }
}
