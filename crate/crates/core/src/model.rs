//! The siamese contrastive core: a shared feature projection, one encoder
//! per primitive, one classifier per primitive, and their losses.

use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::data::{CompositionLabel, DatasetBundle, TrainBatch};
use crate::error::{Error, Result};
use crate::nn::{BoundLinear, BoundMlp, Linear, Mlp};
use crate::tensor::Tensor;

/// Architecture sizes. `embed_dim` is the width of the projection, `hidden`
/// the inner width of both encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub proto_dim: usize,
    pub n_states: usize,
    pub n_objects: usize,
    /// Number of linear layers in each classifier head.
    pub classifier_depth: usize,
}

impl ModelDims {
    /// Square projection, 300-wide prototypes, encoder hidden twice the
    /// prototype width, linear classifiers.
    pub fn new(feature_dim: usize, n_states: usize, n_objects: usize) -> Self {
        Self::with_proto(feature_dim, n_states, n_objects, 300)
    }

    pub fn with_proto(feature_dim: usize, n_states: usize, n_objects: usize, proto_dim: usize) -> Self {
        Self {
            feature_dim,
            embed_dim: feature_dim,
            hidden: 2 * proto_dim,
            proto_dim,
            n_states,
            n_objects,
            classifier_depth: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.feature_dim,
            self.embed_dim,
            self.hidden,
            self.proto_dim,
            self.n_states,
            self.n_objects,
            self.classifier_depth,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidConfig(alloc::format!("model dims must be positive: {self:?}")));
        }
        Ok(())
    }

    fn classifier_dims(&self, classes: usize) -> Vec<usize> {
        let mut dims = alloc::vec![self.proto_dim; self.classifier_depth];
        dims.push(classes);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenParams {
    /// Feature projection.
    pub fc: Linear,
    /// State-specific encoder.
    pub e_s: Mlp,
    /// Object-specific encoder.
    pub e_o: Mlp,
    /// State classifier.
    pub c_a: Mlp,
    /// Object classifier.
    pub c_o: Mlp,
}

/// Which parameter groups of [`ScenParams`] receive gradients in a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenTrainable {
    pub fc: bool,
    pub e_s: bool,
    pub e_o: bool,
    pub c_a: bool,
    pub c_o: bool,
}

impl ScenTrainable {
    pub const ALL: Self = Self {
        fc: true,
        e_s: true,
        e_o: true,
        c_a: true,
        c_o: true,
    };
    pub const NONE: Self = Self {
        fc: false,
        e_s: false,
        e_o: false,
        c_a: false,
        c_o: false,
    };
}

impl ScenParams {
    pub fn init<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let fc = Linear::init(dims.feature_dim, dims.embed_dim, rng);
        let enc = [dims.embed_dim, dims.hidden, dims.proto_dim];
        let e_s = Mlp::init(&enc, rng)?;
        let e_o = Mlp::init(&enc, rng)?;
        let c_a = Mlp::init(&dims.classifier_dims(dims.n_states), rng)?;
        let c_o = Mlp::init(&dims.classifier_dims(dims.n_objects), rng)?;
        Ok(Self { fc, e_s, e_o, c_a, c_o })
    }

    /// All weights and biases zero.
    pub fn zeros(dims: &ModelDims) -> Result<Self> {
        dims.validate()?;
        let zeros = |d: &[usize]| Mlp::from_layers(d.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect());
        Ok(Self {
            fc: Linear::zeros(dims.feature_dim, dims.embed_dim),
            e_s: zeros(&[dims.embed_dim, dims.hidden, dims.proto_dim])?,
            e_o: zeros(&[dims.embed_dim, dims.hidden, dims.proto_dim])?,
            c_a: zeros(&dims.classifier_dims(dims.n_states))?,
            c_o: zeros(&dims.classifier_dims(dims.n_objects))?,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            feature_dim: self.fc.in_dim(),
            embed_dim: self.fc.out_dim(),
            hidden: self.e_s.layers[0].out_dim(),
            proto_dim: self.e_s.out_dim(),
            n_states: self.c_a.out_dim(),
            n_objects: self.c_o.out_dim(),
            classifier_depth: self.c_a.layers.len(),
        }
    }

    pub fn bind(&self, g: &mut Graph, trainable: ScenTrainable) -> BoundScen {
        BoundScen {
            fc: self.fc.bind(g, trainable.fc),
            e_s: self.e_s.bind(g, trainable.e_s),
            e_o: self.e_o.bind(g, trainable.e_o),
            c_a: self.c_a.bind(g, trainable.c_a),
            c_o: self.c_o.bind(g, trainable.c_o),
        }
    }

    /// Tensors in checkpoint order: fc, e_s, e_o, c_a, c_o (weight then bias per layer).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = alloc::vec![&self.fc.weight, &self.fc.bias];
        for m in [&self.e_s, &self.e_o, &self.c_a, &self.c_o] {
            v.extend(m.tensors());
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = alloc::vec![&mut self.fc.weight, &mut self.fc.bias];
        v.extend(self.e_s.tensors_mut());
        v.extend(self.e_o.tensors_mut());
        v.extend(self.c_a.tensors_mut());
        v.extend(self.c_o.tensors_mut());
        v
    }

    /// Prototypes `(h_s, h_o)` of one feature vector.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.fc.in_dim() {
            return Err(Error::ShapeMismatch {
                op: "encode",
                lhs: alloc::vec![x.len()],
                rhs: alloc::vec![self.fc.in_dim()],
            });
        }
        let mut g = Graph::new();
        let b = self.bind(&mut g, ScenTrainable::NONE);
        let xv = g.constant(Tensor::matrix(1, x.len(), x.to_vec())?);
        let (hs, ho) = b.encode(&mut g, xv)?;
        Ok((g.value(hs).data().to_vec(), g.value(ho).data().to_vec()))
    }

    /// State and object logits for the rows of `x`.
    pub fn head_logits(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, ScenTrainable::NONE);
        let xv = g.constant(x.clone());
        let (hs, ho) = b.encode(&mut g, xv)?;
        let ls = b.c_a.forward(&mut g, hs)?;
        let lo = b.c_o.forward(&mut g, ho)?;
        Ok((g.value(ls).clone(), g.value(lo).clone()))
    }
}

#[derive(Debug, Clone)]
pub struct BoundScen {
    pub fc: BoundLinear,
    pub e_s: BoundMlp,
    pub e_o: BoundMlp,
    pub c_a: BoundMlp,
    pub c_o: BoundMlp,
}

impl BoundScen {
    /// `x: [n, feature_dim]` to `(h_s, h_o)`, each `[n, proto_dim]`.
    pub fn encode(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        let z = self.fc.forward(g, x)?;
        Ok((self.e_s.forward(g, z)?, self.e_o.forward(g, z)?))
    }

    pub fn fc_vars(&self) -> Vec<Var> {
        alloc::vec![self.fc.weight, self.fc.bias]
    }

    /// All variables in the order of [`ScenParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.fc_vars();
        for m in [&self.e_s, &self.e_o, &self.c_a, &self.c_o] {
            v.extend(m.vars());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveConfig {
    pub tau_s: f64,
    pub tau_o: f64,
    pub k: usize,
    /// L2-normalise prototypes inside the contrastive losses.
    pub normalize: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            tau_s: 0.1,
            tau_o: 0.1,
            k: 10,
            normalize: true,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        for tau in [self.tau_s, self.tau_o] {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(Error::InvalidTemperature(tau));
            }
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        Ok(())
    }
}

/// Batched InfoNCE. `anchors` and `positives` are `[B, d]`, `negatives` is
/// `[B*k, d]` with row `r*k + i` the i-th negative of row `r`. Returns the
/// mean over rows of `-log(e^{a.p/t} / (e^{a.p/t} + sum_i e^{a.n_i/t}))`.
pub fn info_nce(g: &mut Graph, anchors: Var, positives: Var, negatives: Var, k: usize, tau: f64, normalize: bool) -> Result<Var> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidTemperature(tau));
    }
    let b = g.value(anchors).rows();
    if k == 0 || g.value(negatives).rows() != b * k {
        return Err(Error::ShapeMismatch {
            op: "info_nce",
            lhs: g.value(anchors).shape().to_vec(),
            rhs: g.value(negatives).shape().to_vec(),
        });
    }
    let (a, p, n) = if normalize {
        (g.l2_normalize(anchors), g.l2_normalize(positives), g.l2_normalize(negatives))
    } else {
        (anchors, positives, negatives)
    };
    let pos = g.row_dot(a, p)?;
    let pos = g.reshape(pos, &[b, 1])?;
    let repeat: Vec<usize> = (0..b).flat_map(|r| core::iter::repeat_n(r, k)).collect();
    let a_rep = g.gather_rows(a, &repeat)?;
    let neg = g.row_dot(a_rep, n)?;
    let neg = g.reshape(neg, &[b, k])?;
    let logits = g.concat(pos, neg)?;
    let logits = g.scale(logits, 1.0 / tau);
    let log_p = g.log_softmax(logits, 1)?;
    let first = g.pick(log_p, &alloc::vec![0; b])?;
    let m = g.mean(first);
    Ok(g.scale(m, -1.0))
}

/// Mean cross-entropy of `logits: [n, classes]` against `targets`.
pub fn cross_entropy(g: &mut Graph, logits: Var, targets: &[usize], kind: &'static str) -> Result<Var> {
    let classes = g.value(logits).cols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::LabelOutOfRange {
            kind,
            id: bad,
            size: classes,
        });
    }
    let lp = g.log_softmax(logits, 1)?;
    let picked = g.pick(lp, targets)?;
    let m = g.mean(picked);
    Ok(g.scale(m, -1.0))
}

/// `CE(C_a(h_s), a) + CE(C_o(h_o), o)` averaged over the rows.
pub fn classification_loss(g: &mut Graph, params: &BoundScen, h_s: Var, h_o: Var, labels: &[CompositionLabel]) -> Result<Var> {
    let states: Vec<usize> = labels.iter().map(|l| l.state).collect();
    let objects: Vec<usize> = labels.iter().map(|l| l.object).collect();
    let ls = params.c_a.forward(g, h_s)?;
    let lo = params.c_o.forward(g, h_o)?;
    let ce_s = cross_entropy(g, ls, &states, "state")?;
    let ce_o = cross_entropy(g, lo, &objects, "object")?;
    g.add(ce_s, ce_o)
}

/// Row positions of every image a batch needs, encoded in one pass.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub h_s: Var,
    pub h_o: Var,
    pub n_anchors: usize,
    pub n_contrastive: usize,
    pub k: usize,
}

impl EncodedBatch {
    pub fn anchor_rows(&self) -> Vec<usize> {
        (0..self.n_anchors).collect()
    }

    pub fn transition_rows(&self) -> Vec<usize> {
        (self.n_anchors..2 * self.n_anchors).collect()
    }

    fn block(&self, i: usize) -> usize {
        2 * self.n_anchors + i * self.n_contrastive
    }

    pub fn state_positive_rows(&self) -> Vec<usize> {
        (self.block(0)..self.block(1)).collect()
    }

    pub fn object_positive_rows(&self) -> Vec<usize> {
        (self.block(1)..self.block(2)).collect()
    }

    pub fn negative_rows(&self) -> Vec<usize> {
        let start = self.block(2);
        (start..start + self.n_contrastive * self.k).collect()
    }
}

/// Encodes anchors, transition partners, positives and negatives of `batch`
/// through one shared projection and both encoders.
pub fn encode_batch(g: &mut Graph, params: &BoundScen, bundle: &DatasetBundle, batch: &TrainBatch) -> Result<EncodedBatch> {
    let mut rows: Vec<usize> = batch.anchors.clone();
    rows.extend(&batch.transitions);
    rows.extend(batch.contrastive.iter().map(|r| r.state_positive));
    rows.extend(batch.contrastive.iter().map(|r| r.object_positive));
    for r in &batch.contrastive {
        rows.extend(r.state_negatives());
    }
    let x = g.constant(bundle.features().select_rows(&rows)?);
    let (h_s, h_o) = params.encode(g, x)?;
    Ok(EncodedBatch {
        h_s,
        h_o,
        n_anchors: batch.anchors.len(),
        n_contrastive: batch.contrastive.len(),
        k: batch.k,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ContrastiveLosses {
    pub scl: Var,
    pub ocl: Var,
}

/// State-space and object-space InfoNCE over the contrastive rows of a
/// batch; both spaces use each row's single negative list. `None` when the
/// batch has no contrastive rows.
pub fn contrastive_losses(g: &mut Graph, cfg: &ContrastiveConfig, batch: &TrainBatch, enc: &EncodedBatch) -> Result<Option<ContrastiveLosses>> {
    cfg.validate()?;
    if batch.contrastive.is_empty() {
        return Ok(None);
    }
    if batch.k != cfg.k {
        return Err(Error::InvalidConfig(alloc::format!(
            "batch sampled with K={} but configured K={}",
            batch.k,
            cfg.k
        )));
    }
    let anchor_rows: Vec<usize> = batch.contrastive.iter().map(|r| r.row).collect();
    let neg = enc.negative_rows();

    let a_s = g.gather_rows(enc.h_s, &anchor_rows)?;
    let p_s = g.gather_rows(enc.h_s, &enc.state_positive_rows())?;
    let n_s = g.gather_rows(enc.h_s, &neg)?;
    let scl = info_nce(g, a_s, p_s, n_s, cfg.k, cfg.tau_s, cfg.normalize)?;

    let a_o = g.gather_rows(enc.h_o, &anchor_rows)?;
    let p_o = g.gather_rows(enc.h_o, &enc.object_positive_rows())?;
    let n_o = g.gather_rows(enc.h_o, &neg)?;
    let ocl = info_nce(g, a_o, p_o, n_o, cfg.k, cfg.tau_o, cfg.normalize)?;
    Ok(Some(ContrastiveLosses { scl, ocl }))
}

/// `L_scl + L_ocl + L_cls`.
pub fn cts_loss(g: &mut Graph, scl: Var, ocl: Var, cls: Var) -> Result<Var> {
    let s = g.add(scl, ocl)?;
    g.add(s, cls)
}
