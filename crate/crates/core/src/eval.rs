//! Generalized zero-shot inference and metrics.
//!
//! A pair `(a, o)` scores `log p(a | h_s) + log p(o | h_o)`. A calibration
//! bias `b` is added to every unseen-pair column and swept over every value
//! at which some image's prediction can flip; each bias gives one
//! `(seen accuracy, unseen accuracy)` operating point.
//!
//! For one image let `s` / `u` be its best seen / unseen column (lowest index
//! on ties) and `d = score(s) - score(u)` its margin. At a finite bias the
//! image predicts `u` when `d < b`, or when `d == b` and `u < s`. The
//! sentinel biases restrict the prediction to seen (`-inf`) or unseen
//! (`+inf`) columns.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{CompositionLabel, DatasetBundle, Split};
use crate::error::{Error, Result};
use crate::model::ScenParams;
use crate::tensor::Tensor;

/// Per-image log-probabilities of both classifier heads on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub images: Vec<usize>,
    pub state_log_probs: Tensor,
    pub object_log_probs: Tensor,
    pub truth: Vec<CompositionLabel>,
}

fn log_softmax_rows(t: &Tensor) -> Tensor {
    let mut g = crate::autodiff::Graph::new();
    let v = g.constant(t.clone());
    let l = g.log_softmax(v, 1).expect("rank-2 logits");
    g.value(l).clone()
}

pub fn head_outputs(scen: &ScenParams, bundle: &DatasetBundle, split: Split) -> Result<HeadOutputs> {
    let images = bundle.indices(split);
    if images.is_empty() {
        return Err(Error::EmptySplit);
    }
    if scen.dims().feature_dim != bundle.feature_dim() {
        return Err(Error::ShapeMismatch {
            op: "head_outputs",
            lhs: vec![scen.dims().feature_dim],
            rhs: vec![bundle.feature_dim()],
        });
    }
    let x = bundle.features().select_rows(&images)?;
    let (ls, lo) = scen.head_logits(&x)?;
    if ls.cols() != bundle.n_states() || lo.cols() != bundle.n_objects() {
        return Err(Error::ShapeMismatch {
            op: "head_outputs",
            lhs: vec![ls.cols(), lo.cols()],
            rhs: vec![bundle.n_states(), bundle.n_objects()],
        });
    }
    let truth = images.iter().map(|&i| bundle.label(i)).collect();
    Ok(HeadOutputs {
        images,
        state_log_probs: log_softmax_rows(&ls),
        object_log_probs: log_softmax_rows(&lo),
        truth,
    })
}

/// Scores of every test image against every candidate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    /// `[n_images, n_pairs]`.
    pub scores: Tensor,
    /// Sorted by `(state, object)`.
    pub candidate_pairs: Vec<CompositionLabel>,
    pub truth: Vec<CompositionLabel>,
    pub is_unseen: Vec<bool>,
}

impl ScoreMatrix {
    pub fn new(scores: Tensor, candidate_pairs: Vec<CompositionLabel>, truth: Vec<CompositionLabel>, is_unseen: Vec<bool>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidDataset(alloc::string::String::from(m)));
        if scores.rank() != 2 || scores.cols() != candidate_pairs.len() || scores.rows() != truth.len() {
            return bad("score matrix shape disagrees with pairs or truth");
        }
        if is_unseen.len() != candidate_pairs.len() {
            return bad("unseen flags disagree with candidate pairs");
        }
        if candidate_pairs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("candidate pairs must be strictly sorted by (state, object)");
        }
        if truth.iter().any(|t| candidate_pairs.binary_search(t).is_err()) {
            return bad("a truth label is not among the candidate pairs");
        }
        Ok(Self {
            scores,
            candidate_pairs,
            truth,
            is_unseen,
        })
    }

    pub fn n_images(&self) -> usize {
        self.truth.len()
    }

    pub fn truth_column(&self, i: usize) -> usize {
        self.candidate_pairs.binary_search(&self.truth[i]).expect("validated")
    }

    pub fn truth_is_unseen(&self, i: usize) -> bool {
        self.is_unseen[self.truth_column(i)]
    }
}

pub fn scores_from_heads(heads: &HeadOutputs, bundle: &DatasetBundle) -> Result<ScoreMatrix> {
    let pairs = bundle.candidate_pairs();
    let n = heads.truth.len();
    let mut data = Vec::with_capacity(n * pairs.len());
    for i in 0..n {
        let s = heads.state_log_probs.row(i);
        let o = heads.object_log_probs.row(i);
        data.extend(pairs.iter().map(|p| s[p.state] + o[p.object]));
    }
    let is_unseen = pairs.iter().map(|p| !bundle.is_seen(p)).collect();
    ScoreMatrix::new(Tensor::new(vec![n, pairs.len()], data)?, pairs, heads.truth.clone(), is_unseen)
}

pub fn score_pairs(scen: &ScenParams, bundle: &DatasetBundle, split: Split) -> Result<ScoreMatrix> {
    scores_from_heads(&head_outputs(scen, bundle, split)?, bundle)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub seen_acc: f64,
    pub unseen_acc: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub auc: f64,
    pub best_hm: f64,
    pub best_seen: f64,
    pub best_unseen: f64,
    /// Ordered by increasing bias.
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub best_hm: f64,
    pub best_seen: f64,
    pub best_unseen: f64,
    pub state_acc: f64,
    pub object_acc: f64,
    pub curve: Vec<CurvePoint>,
}

pub fn harmonic_mean(s: f64, u: f64) -> f64 {
    if s + u == 0.0 {
        0.0
    } else {
        2.0 * s * u / (s + u)
    }
}

#[derive(Debug, Clone, Copy)]
struct ImageSides {
    seen_col: usize,
    unseen_col: usize,
    margin: f64,
    truth_col: usize,
    truth_unseen: bool,
}

fn argmax_where(row: &[f64], keep: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &v) in row.iter().enumerate() {
        if keep(j) && best.is_none_or(|b| v > row[b]) {
            best = Some(j);
        }
    }
    best
}

fn image_sides(sm: &ScoreMatrix) -> Result<Vec<ImageSides>> {
    if !sm.is_unseen.iter().any(|&u| u) {
        return Err(Error::MissingClass("unseen"));
    }
    if sm.is_unseen.iter().all(|&u| u) {
        return Err(Error::MissingClass("seen"));
    }
    Ok((0..sm.n_images())
        .map(|i| {
            let row = sm.scores.row(i);
            let seen_col = argmax_where(row, |j| !sm.is_unseen[j]).unwrap();
            let unseen_col = argmax_where(row, |j| sm.is_unseen[j]).unwrap();
            let truth_col = sm.truth_column(i);
            ImageSides {
                seen_col,
                unseen_col,
                margin: row[seen_col] - row[unseen_col],
                truth_col,
                truth_unseen: sm.is_unseen[truth_col],
            }
        })
        .collect())
}

fn predict(img: &ImageSides, bias: f64) -> usize {
    if bias == f64::NEG_INFINITY {
        return img.seen_col;
    }
    if bias == f64::INFINITY {
        return img.unseen_col;
    }
    if img.margin < bias || (img.margin == bias && img.unseen_col < img.seen_col) {
        img.unseen_col
    } else {
        img.seen_col
    }
}

/// Predicted column of every image under calibration bias `bias`.
pub fn predict_columns(sm: &ScoreMatrix, bias: f64) -> Result<Vec<usize>> {
    Ok(image_sides(sm)?.iter().map(|s| predict(s, bias)).collect())
}

/// Sweeps the calibration bias and summarises the seen/unseen curve.
pub fn bias_sweep(sm: &ScoreMatrix) -> Result<SweepResult> {
    let sides = image_sides(sm)?;
    let n_seen = sides.iter().filter(|s| !s.truth_unseen).count();
    let n_unseen = sides.len() - n_seen;
    if n_seen == 0 {
        return Err(Error::MissingClass("seen"));
    }
    if n_unseen == 0 {
        return Err(Error::MissingClass("unseen"));
    }

    let mut margins: Vec<f64> = sides.iter().map(|s| s.margin).collect();
    margins.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    margins.dedup();
    let mut biases = Vec::with_capacity(2 * margins.len() + 1);
    biases.push(f64::NEG_INFINITY);
    for (j, &m) in margins.iter().enumerate() {
        if j > 0 {
            biases.push(0.5 * (margins[j - 1] + m));
        }
        biases.push(m);
    }
    biases.push(f64::INFINITY);

    let curve: Vec<CurvePoint> = biases
        .iter()
        .map(|&bias| {
            let (mut hit_s, mut hit_u) = (0usize, 0usize);
            for img in &sides {
                if predict(img, bias) == img.truth_col {
                    if img.truth_unseen {
                        hit_u += 1;
                    } else {
                        hit_s += 1;
                    }
                }
            }
            CurvePoint {
                seen_acc: hit_s as f64 / n_seen as f64,
                unseen_acc: hit_u as f64 / n_unseen as f64,
                bias,
            }
        })
        .collect();

    for w in curve.windows(2) {
        assert!(
            w[1].seen_acc <= w[0].seen_acc && w[1].unseen_acc >= w[0].unseen_acc,
            "seen/unseen curve lost monotonicity between biases {} and {}",
            w[0].bias,
            w[1].bias
        );
    }

    let best_hm = curve
        .iter()
        .map(|p| harmonic_mean(p.seen_acc, p.unseen_acc))
        .fold(0.0, f64::max);
    Ok(SweepResult {
        auc: curve_auc(&curve),
        best_hm,
        best_seen: curve[0].seen_acc,
        best_unseen: curve[curve.len() - 1].unseen_acc,
        curve,
    })
}

/// Trapezoids over the points sorted by seen accuracy ascending, then
/// unseen accuracy descending.
pub fn trapezoid_auc(points: &mut [(f64, f64)]) -> f64 {
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

fn curve_auc(curve: &[CurvePoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.seen_acc, p.unseen_acc)).collect();
    trapezoid_auc(&mut pts)
}

/// Fractions of images whose state (object) head argmax is the true state (object).
pub fn primitive_accuracies(heads: &HeadOutputs) -> (f64, f64) {
    let n = heads.truth.len();
    let (mut s, mut o) = (0usize, 0usize);
    for (i, t) in heads.truth.iter().enumerate() {
        if argmax_where(heads.state_log_probs.row(i), |_| true) == Some(t.state) {
            s += 1;
        }
        if argmax_where(heads.object_log_probs.row(i), |_| true) == Some(t.object) {
            o += 1;
        }
    }
    (s as f64 / n as f64, o as f64 / n as f64)
}

pub fn evaluate(scen: &ScenParams, bundle: &DatasetBundle, split: Split) -> Result<EvalReport> {
    let heads = head_outputs(scen, bundle, split)?;
    let sm = scores_from_heads(&heads, bundle)?;
    let sweep = bias_sweep(&sm)?;
    let (state_acc, object_acc) = primitive_accuracies(&heads);
    Ok(EvalReport {
        auc: sweep.auc,
        best_hm: sweep.best_hm,
        best_seen: sweep.best_seen,
        best_unseen: sweep.best_unseen,
        state_acc,
        object_acc,
        curve: sweep.curve,
    })
}
