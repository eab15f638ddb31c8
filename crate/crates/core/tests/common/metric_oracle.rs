//! Random dyadic score matrices and an exhaustive bias-regime oracle.
//! Shared with the acceptance suite of the `scen` crate.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scen_core::eval::ScoreMatrix;
use scen_core::{CompositionLabel, Tensor};

/// Scores are multiples of 1/8 in [-4, 4] so that every sum, difference and
/// midpoint is exact. Both seen and unseen columns and truths are present.
pub fn random_score_matrix(seed: u64, max_images: usize, max_pairs: usize) -> ScoreMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pairs = rng.random_range(2..=max_pairs);
    let n_images = rng.random_range(2..=max_images);
    let mut is_unseen: Vec<bool> = (0..n_pairs).map(|_| rng.random_bool(0.5)).collect();
    let a = rng.random_range(0..n_pairs);
    let mut b = rng.random_range(0..n_pairs - 1);
    if b >= a {
        b += 1;
    }
    is_unseen[a] = false;
    is_unseen[b] = true;
    let seen_cols: Vec<usize> = (0..n_pairs).filter(|&j| !is_unseen[j]).collect();
    let unseen_cols: Vec<usize> = (0..n_pairs).filter(|&j| is_unseen[j]).collect();
    let pairs: Vec<CompositionLabel> = (0..n_pairs).map(|j| CompositionLabel::new(j / 4, j % 4)).collect();
    let truth_cols: Vec<usize> = (0..n_images)
        .map(|i| match i {
            0 => seen_cols[rng.random_range(0..seen_cols.len())],
            1 => unseen_cols[rng.random_range(0..unseen_cols.len())],
            _ => rng.random_range(0..n_pairs),
        })
        .collect();
    let scores = (0..n_images * n_pairs)
        .map(|_| rng.random_range(-32i32..=32) as f64 / 8.0)
        .collect();
    ScoreMatrix::new(
        Tensor::new(vec![n_images, n_pairs], scores).unwrap(),
        pairs.clone(),
        truth_cols.iter().map(|&c| pairs[c]).collect(),
        is_unseen,
    )
    .unwrap()
}

/// Column chosen by image `i` when `bias` is added to every unseen column,
/// lowest index on ties. Infinite biases restrict the choice to one side.
pub fn oracle_prediction(sm: &ScoreMatrix, i: usize, bias: f64) -> usize {
    let row = sm.scores.row(i);
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in row.iter().enumerate() {
        let v = if bias.is_infinite() {
            if sm.is_unseen[j] != (bias > 0.0) {
                continue;
            }
            s
        } else if sm.is_unseen[j] {
            s + bias
        } else {
            s
        };
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((j, v));
        }
    }
    best.unwrap().0
}

pub fn oracle_point(sm: &ScoreMatrix, bias: f64) -> (f64, f64) {
    let (mut hs, mut ns, mut hu, mut nu) = (0, 0, 0, 0);
    for i in 0..sm.truth.len() {
        let t = sm.candidate_pairs.iter().position(|p| *p == sm.truth[i]).unwrap();
        let hit = oracle_prediction(sm, i, bias) == t;
        if sm.is_unseen[t] {
            nu += 1;
            hu += hit as usize;
        } else {
            ns += 1;
            hs += hit as usize;
        }
    }
    (hs as f64 / ns as f64, hu as f64 / nu as f64)
}

/// Every seen-minus-unseen column difference of every image, all midpoints
/// between them and both sentinels.
pub fn oracle_biases(sm: &ScoreMatrix) -> Vec<f64> {
    let mut d = Vec::new();
    for i in 0..sm.truth.len() {
        let row = sm.scores.row(i);
        for j in 0..row.len() {
            for k in 0..row.len() {
                if !sm.is_unseen[j] && sm.is_unseen[k] {
                    d.push(row[j] - row[k]);
                }
            }
        }
    }
    d.sort_by(f64::total_cmp);
    d.dedup();
    let mut all = d.clone();
    for a in 0..d.len() {
        for b in a + 1..d.len() {
            all.push(0.5 * (d[a] + d[b]));
        }
    }
    all.push(f64::NEG_INFINITY);
    all.push(f64::INFINITY);
    all
}

#[derive(Debug, PartialEq)]
pub struct OracleMetrics {
    pub auc: f64,
    pub best_hm: f64,
    pub best_seen: f64,
    pub best_unseen: f64,
}

pub fn oracle_metrics(sm: &ScoreMatrix) -> OracleMetrics {
    let mut pts: Vec<(f64, f64)> = oracle_biases(sm).iter().map(|&b| oracle_point(sm, b)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup();
    let mut auc = 0.0;
    for w in pts.windows(2) {
        auc += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5;
    }
    let hm = |s: f64, u: f64| if s + u == 0.0 { 0.0 } else { 2.0 * s * u / (s + u) };
    OracleMetrics {
        auc,
        best_hm: pts.iter().map(|&(s, u)| hm(s, u)).fold(0.0, f64::max),
        best_seen: oracle_point(sm, f64::NEG_INFINITY).0,
        best_unseen: oracle_point(sm, f64::INFINITY).1,
    }
}
