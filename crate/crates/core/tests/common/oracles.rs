//! Brute-force evaluations of the per-sequence consistency formulas and
//! the accuracy-matrix summary, independent of the library code paths.

use msd_core::metrics::{c_sample, c_swap_sequence, gc_sample, modal_label, summarize_matrix, SummaryMode};

/// Every label sequence of length `t` over `classes` labels.
pub fn all_sequences(t: usize, classes: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|s: Vec<u32>| {
                (0..classes).map(move |c| {
                    let mut s = s.clone();
                    s.push(c);
                    s
                })
            })
            .collect();
    }
    out
}

/// Adjacent agreement via the number of label changes.
fn oracle_c_sample(s: &[u32]) -> f64 {
    let changes = (1..s.len()).filter(|&i| s[i] != s[i - 1]).count();
    1.0 - changes as f64 / (s.len() - 1) as f64
}

/// Mode by counting each candidate label in ascending order.
fn oracle_mode(s: &[u32], classes: u32) -> (u32, usize) {
    let mut best = (0, 0);
    for v in 0..classes {
        let n = s.iter().filter(|&&x| x == v).count();
        if n > best.1 {
            best = (v, n);
        }
    }
    best
}

fn oracle_c_swap(s: &[u32], donor: u32) -> f64 {
    let mut hits = 0.0;
    for &x in s {
        if x == donor {
            hits += 1.0;
        }
    }
    hits / s.len() as f64
}

/// Checks the three per-sequence formulas on every sequence with
/// `T <= 4` and at most three classes. Returns the number of cases and
/// the mismatches found.
pub fn check_sequence_formulas() -> (usize, Vec<String>) {
    let mut cases = 0;
    let mut bad = Vec::new();
    for t in 1..=4 {
        for classes in 1..=3u32 {
            for s in all_sequences(t, classes) {
                cases += 1;
                match (t >= 2, c_sample(&s)) {
                    (true, Ok(v)) if (v - oracle_c_sample(&s)).abs() < 1e-12 => {}
                    (false, Err(_)) => {}
                    (_, got) => bad.push(format!("c_sample {s:?}: {got:?}")),
                }
                let (mode, count) = oracle_mode(&s, classes);
                if modal_label(&s).ok() != Some((mode, count)) {
                    bad.push(format!("modal_label {s:?}"));
                }
                match gc_sample(&s) {
                    Ok(v) if (v - count as f64 / t as f64).abs() < 1e-12 => {}
                    got => bad.push(format!("gc_sample {s:?}: {got:?}")),
                }
                for donor in 0..classes {
                    match c_swap_sequence(&s, donor) {
                        Ok(v) if (v - oracle_c_swap(&s, donor)).abs() < 1e-12 => {}
                        got => bad.push(format!("c_swap {s:?} donor {donor}: {got:?}")),
                    }
                }
            }
        }
    }
    (cases, bad)
}

/// The summary written straight from its definition.
fn oracle_summary(a: &[Vec<f64>], floors: &[f64], geometric: bool) -> f64 {
    let k = a.len();
    let mut diag = Vec::new();
    let mut off = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i == j {
                diag.push(a[i][j]);
            } else {
                let dev = (a[i][j] - floors[j]).abs() / (1.0 - floors[j]);
                off.push(1.0 - if dev > 1.0 { 1.0 } else { dev });
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if off.is_empty() {
        return mean(&diag);
    }
    let (d, o) = (mean(&diag), mean(&off));
    if geometric {
        (d * o).sqrt()
    } else {
        0.5 * d + 0.5 * o
    }
}

/// Accuracy matrices whose cells come from judged-label sequences of
/// length `T <= 4` (two factors) or `T <= 2` (three factors) over factors
/// with two or three classes, each cell scoring agreement with label 0.
pub fn check_matrix_summaries() -> (usize, Vec<String>) {
    let mut cases = 0;
    let mut bad = Vec::new();
    let shapes: &[(usize, usize)] = &[(1, 4), (2, 4), (3, 2)];
    for &(k, max_t) in shapes {
        for t in 1..=max_t {
            for card in [[2u32, 2, 2], [3, 3, 3], [2, 3, 3], [3, 2, 2]] {
                let floors: Vec<f64> = card[..k].iter().map(|&c| 1.0 / c as f64).collect();
                // Each column's cells draw from that factor's label sequences.
                let cell_values: Vec<Vec<f64>> = card[..k]
                    .iter()
                    .map(|&c| {
                        let mut v: Vec<f64> = all_sequences(t, c)
                            .iter()
                            .map(|s| s.iter().filter(|&&x| x == 0).count() as f64 / t as f64)
                            .collect();
                        v.sort_by(f64::total_cmp);
                        v.dedup();
                        v
                    })
                    .collect();
                let cells = k * k;
                let mut idx = vec![0usize; cells];
                loop {
                    let a: Vec<Vec<f64>> = (0..k)
                        .map(|i| (0..k).map(|j| cell_values[j][idx[i * k + j]]).collect())
                        .collect();
                    for (mode, geometric) in [(SummaryMode::Mean, false), (SummaryMode::geometric(), true)] {
                        cases += 1;
                        let want = oracle_summary(&a, &floors, geometric);
                        match summarize_matrix(&a, &floors, mode) {
                            Ok(v) if (v - want).abs() < 1e-12 => {}
                            got => bad.push(format!("summary {a:?} floors {floors:?}: {got:?} vs {want}")),
                        }
                    }
                    let mut p = 0;
                    loop {
                        if p == cells {
                            break;
                        }
                        idx[p] += 1;
                        if idx[p] < cell_values[p % k].len() {
                            break;
                        }
                        idx[p] = 0;
                        p += 1;
                    }
                    if p == cells {
                        break;
                    }
                }
            }
        }
    }
    (cases, bad)
}
