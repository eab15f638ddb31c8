//! Training loop: alternating discriminator and joint updates per batch,
//! validation AUC after every epoch, best-snapshot selection.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::data::{DatasetBundle, Sampler, Split, TrainBatch};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{self, ContrastiveConfig, ModelDims, ScenParams, ScenTrainable};
use crate::nn::collect_grads;
use crate::optim::{Adam, AdamConfig};
use crate::stm::{self, GanMode, StmParams, StmWeights};
use crate::tensor::Tensor;

/// Loss terms switched on in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Classification only.
    Base,
    /// Classification and both contrastive spaces.
    Cts,
    /// Classification and the state transition module.
    Stm,
    #[default]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::Cts, Variant::Stm, Variant::Full];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Self::Base),
            "cts" => Ok(Self::Cts),
            "stm" => Ok(Self::Stm),
            "full" => Ok(Self::Full),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown variant `{other}` (expected base, cts, stm or full)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::Cts => "cts",
            Self::Stm => "stm",
            Self::Full => "full",
        }
    }

    pub fn uses_contrastive(self) -> bool {
        matches!(self, Self::Cts | Self::Full)
    }

    pub fn uses_stm(self) -> bool {
        matches!(self, Self::Stm | Self::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub proto_dim: usize,
    /// Defaults to the feature dimension.
    pub embed_dim: Option<usize>,
    /// Encoder hidden width; defaults to twice `proto_dim`.
    pub hidden: Option<usize>,
    pub classifier_depth: usize,
    /// Generator and discriminator hidden width; defaults to the encoder hidden width.
    pub stm_hidden: Option<usize>,
    pub contrastive: ContrastiveConfig,
    pub weights: StmWeights,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub gan_mode: GanMode,
    /// Bitwise reproducibility. Every kernel here is single-threaded, so
    /// runs are reproducible either way.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            proto_dim: 300,
            embed_dim: None,
            hidden: None,
            classifier_depth: 1,
            stm_hidden: None,
            contrastive: ContrastiveConfig::default(),
            weights: StmWeights::default(),
            adam: AdamConfig::default(),
            batch_size: 128,
            epochs: 60,
            seed: 0,
            variant: Variant::Full,
            gan_mode: GanMode::NonSaturating,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn model_dims(&self, bundle: &DatasetBundle) -> ModelDims {
        let mut d = ModelDims::with_proto(bundle.feature_dim(), bundle.n_states(), bundle.n_objects(), self.proto_dim);
        if let Some(e) = self.embed_dim {
            d.embed_dim = e;
        }
        if let Some(h) = self.hidden {
            d.hidden = h;
        }
        d.classifier_depth = self.classifier_depth;
        d
    }

    pub fn stm_hidden_dim(&self, dims: &ModelDims) -> usize {
        self.stm_hidden.unwrap_or(dims.hidden)
    }

    pub fn validate(&self) -> Result<()> {
        self.contrastive.validate()?;
        self.weights.validate()?;
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("invalid optimizer settings {a:?}")));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.stm_hidden == Some(0) || self.proto_dim == 0 {
            return Err(Error::InvalidConfig("model widths must be positive".into()));
        }
        Ok(())
    }

    /// Whether the state transition terms take part in training.
    pub fn stm_active(&self) -> bool {
        self.variant.uses_stm() && self.weights.beta != 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub scen: ScenParams,
    pub stm: StmParams,
}

impl Model {
    /// Same draws for every variant, so variants sharing a seed share an initialisation.
    pub fn init(cfg: &TrainConfig, bundle: &DatasetBundle) -> Result<Self> {
        let dims = cfg.model_dims(bundle);
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let scen = ScenParams::init(&dims, &mut rng)?;
        let stm = StmParams::init(dims.proto_dim, dims.feature_dim, cfg.stm_hidden_dim(&dims), &mut rng)?;
        Ok(Self { scen, stm })
    }
}

/// Parameter groups, in the order used by [`GroupNorms`].
pub const GROUPS: [&str; 7] = ["fc", "e_s", "e_o", "c_a", "c_o", "g", "d"];

/// L2 norm of the gradient reaching each parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupNorms(pub [f64; 7]);

impl GroupNorms {
    pub fn get(&self, group: &str) -> f64 {
        let i = GROUPS.iter().position(|g| *g == group).expect("known group");
        self.0[i]
    }

    /// Names of the groups with a nonzero gradient.
    pub fn nonzero(&self) -> Vec<&'static str> {
        GROUPS.iter().zip(self.0).filter(|(_, n)| *n != 0.0).map(|(g, _)| *g).collect()
    }
}

/// Per-parameter gradient accumulators, zeroed explicitly before each batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub grads: Vec<Tensor>,
}

impl GradBuffer {
    pub fn for_model(model: &Model) -> Self {
        let mut grads: Vec<Tensor> = model.scen.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        grads.extend(model.stm.tensors().iter().map(|t| Tensor::zeros(t.shape())));
        Self { grads }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.grads.len() {
            return Err(Error::ShapeMismatch {
                op: "accumulate",
                lhs: alloc::vec![self.grads.len()],
                rhs: alloc::vec![grads.len()],
            });
        }
        for (a, b) in self.grads.iter_mut().zip(grads) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn all_zero(&self) -> bool {
        self.grads.iter().all(|t| t.data().iter().all(|&v| v == 0.0))
    }

    fn norms(&self, model: &Model) -> GroupNorms {
        let mut sizes = Vec::with_capacity(7);
        sizes.push(2);
        for m in [&model.scen.e_s, &model.scen.e_o, &model.scen.c_a, &model.scen.c_o, &model.stm.g, &model.stm.d] {
            sizes.push(2 * m.layers.len());
        }
        let mut out = [0.0; 7];
        let mut at = 0;
        for (gi, n) in sizes.into_iter().enumerate() {
            let sq: f64 = self.grads[at..at + n].iter().flat_map(|t| t.data()).map(|v| v * v).sum();
            out[gi] = crate::math::sqrt(sq);
            at += n;
        }
        GroupNorms(out)
    }
}

/// Loss values of one batch; terms that were not computed are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLosses {
    pub l_cls: f64,
    pub l_scl: f64,
    pub l_ocl: f64,
    pub l_d: f64,
    pub l_g_adv: f64,
    pub l_cls_re: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub losses: StepLosses,
    /// Gradient norms of the discriminator update (all zero when it did not run).
    pub d_grads: GroupNorms,
    /// Gradient norms of the joint update.
    pub main_grads: GroupNorms,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_cls: f64,
    pub l_scl: f64,
    pub l_ocl: f64,
    pub l_d: f64,
    pub l_g_adv: f64,
    pub l_cls_re: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Validation AUC of the initial model.
    pub init_val_auc: f64,
    pub best: Model,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub final_model: Model,
}

fn finite(term: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericalAbort { term })
    }
}

pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub model: Model,
    bundle: &'a DatasetBundle,
    sampler: Sampler,
    rng: ChaCha8Rng,
    adam_main: Adam,
    adam_d: Adam,
    buffer: GradBuffer,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, bundle: &'a DatasetBundle) -> Result<Self> {
        let model = Model::init(&cfg, bundle)?;
        Self::with_model(cfg, bundle, model)
    }

    pub fn with_model(cfg: TrainConfig, bundle: &'a DatasetBundle, model: Model) -> Result<Self> {
        cfg.validate()?;
        if model.scen.dims() != cfg.model_dims(bundle) {
            return Err(Error::InvalidConfig(alloc::format!(
                "model dims {:?} do not match config {:?}",
                model.scen.dims(),
                cfg.model_dims(bundle)
            )));
        }
        let sampler = Sampler::new(bundle)?;
        if cfg.variant.uses_contrastive() && sampler.eligible().is_empty() {
            return Err(Error::NoEligibleAnchors);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let buffer = GradBuffer::for_model(&model);
        Ok(Self {
            cfg,
            model,
            bundle,
            sampler,
            rng,
            adam_main: Adam::new(cfg.adam),
            adam_d: Adam::new(cfg.adam),
            buffer,
        })
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    /// Gradients of the most recent update.
    pub fn grad_buffer(&self) -> &GradBuffer {
        &self.buffer
    }

    fn all_grads(&self, g: &Graph, scen: &[Var], gen: &[Var], disc: &[Var]) -> Vec<Tensor> {
        let mut v = collect_grads(g, scen);
        v.extend(collect_grads(g, gen));
        v.extend(collect_grads(g, disc));
        v
    }

    fn n_scen(&self) -> usize {
        self.model.scen.tensors().len()
    }

    fn discriminator_step(&mut self, batch: &TrainBatch) -> Result<(f64, GroupNorms)> {
        let mut g = Graph::new();
        let scen = self.model.scen.bind(&mut g, ScenTrainable::NONE);
        let bound = self.model.stm.bind(&mut g, false, true);
        let b = batch.anchors.len();
        let mut rows = batch.anchors.clone();
        rows.extend(&batch.transitions);
        let x = self.bundle.features().select_rows(&rows)?;
        let xv = g.constant(x);
        let (h_s, h_o) = scen.encode(&mut g, xv)?;
        let h_t = g.gather_rows(h_s, &(b..2 * b).collect::<Vec<_>>())?;
        let h_a = g.gather_rows(h_o, &(0..b).collect::<Vec<_>>())?;
        let fake = bound.generate(&mut g, h_t, h_a)?;
        let fake = g.detach(fake);
        let real = g.constant(self.bundle.features().select_rows(&batch.anchors)?);
        let loss = stm::discriminator_loss(&mut g, &bound, real, fake)?;
        let l_d = finite("L_D", g.value(loss).item())?;
        g.backward(loss)?;

        self.buffer.zero();
        let grads = self.all_grads(&g, &scen.vars(), &bound.g.vars(), &bound.d.vars());
        self.buffer.accumulate(&grads)?;
        let norms = self.buffer.norms(&self.model);
        let d_start = self.n_scen() + self.model.stm.g.tensors().len();
        let d_grads = self.buffer.grads[d_start..].to_vec();
        let mut params = self.model.stm.d.tensors_mut();
        self.adam_d.step(&mut params, &d_grads)?;
        Ok((l_d, norms))
    }

    fn joint_step(&mut self, batch: &TrainBatch, losses: &mut StepLosses) -> Result<GroupNorms> {
        let stm_on = self.cfg.stm_active();
        let w = self.cfg.weights;
        let mut g = Graph::new();
        let scen = self.model.scen.bind(&mut g, ScenTrainable::ALL);
        let bound = self.model.stm.bind(&mut g, true, false);
        let enc = model::encode_batch(&mut g, &scen, self.bundle, batch)?;
        let b = enc.n_anchors;
        let anchor_rows = enc.anchor_rows();
        let labels: Vec<_> = batch.anchors.iter().map(|&i| self.bundle.label(i)).collect();
        let hs_a = g.gather_rows(enc.h_s, &anchor_rows)?;
        let ho_a = g.gather_rows(enc.h_o, &anchor_rows)?;
        let cls = model::classification_loss(&mut g, &scen, hs_a, ho_a, &labels)?;
        losses.l_cls = finite("L_cls", g.value(cls).item())?;

        let mut cts = cls;
        if self.cfg.variant.uses_contrastive() {
            if let Some(c) = model::contrastive_losses(&mut g, &self.cfg.contrastive, batch, &enc)? {
                losses.l_scl = finite("L_scl", g.value(c.scl).item())?;
                losses.l_ocl = finite("L_ocl", g.value(c.ocl).item())?;
                cts = model::cts_loss(&mut g, c.scl, c.ocl, cls)?;
            }
        }

        let stm_term = if stm_on {
            let h_t = g.gather_rows(enc.h_s, &enc.transition_rows())?;
            let fake = bound.generate(&mut g, h_t, ho_a)?;
            let adv = stm::generator_adversarial_loss(&mut g, &bound, fake, self.cfg.gan_mode)?;
            let states: Vec<usize> = batch.transitions.iter().map(|&i| self.bundle.label(i).state).collect();
            let objects: Vec<usize> = labels.iter().map(|l| l.object).collect();
            let re = stm::reclassification_loss(&mut g, &scen, fake, &states, &objects)?;
            losses.l_g_adv = finite("L_G_adv", g.value(adv).item())?;
            losses.l_cls_re = finite("L_cls_re", g.value(re).item())?;
            debug_assert_eq!(states.len(), b);
            Some(g.add(adv, re)?)
        } else {
            None
        };
        let total = stm::total_loss(&mut g, &w, cts, stm_term)?;
        losses.total = finite("L_total", g.value(total).item())?;
        g.backward(total)?;

        self.buffer.zero();
        let grads = self.all_grads(&g, &scen.vars(), &bound.g.vars(), &bound.d.vars());
        self.buffer.accumulate(&grads)?;
        let norms = self.buffer.norms(&self.model);
        let d_start = self.n_scen() + self.model.stm.g.tensors().len();
        let joint = self.buffer.grads[..d_start].to_vec();
        let Model { scen: sp, stm: st } = &mut self.model;
        let mut params = sp.tensors_mut();
        params.extend(st.g.tensors_mut());
        self.adam_main.step(&mut params, &joint)?;
        Ok(norms)
    }

    /// One discriminator update (when the state transition terms are on)
    /// followed by one joint update of everything else.
    pub fn step(&mut self, batch: &TrainBatch) -> Result<StepReport> {
        let mut losses = StepLosses::default();
        let d_grads = if self.cfg.stm_active() {
            let (l_d, n) = self.discriminator_step(batch)?;
            losses.l_d = l_d;
            n
        } else {
            GroupNorms::default()
        };
        let main_grads = self.joint_step(batch, &mut losses)?;
        Ok(StepReport {
            losses,
            d_grads,
            main_grads,
        })
    }

    /// Draws the batches of the next epoch from the trainer's sampling stream.
    pub fn epoch_batches(&mut self) -> Result<Vec<TrainBatch>> {
        self.sampler.epoch(self.cfg.batch_size, self.cfg.contrastive.k, &mut self.rng)
    }

    /// One epoch; returns the mean of each loss term over its batches.
    pub fn run_epoch(&mut self) -> Result<StepLosses> {
        let batches = self.epoch_batches()?;
        let mut sum = StepLosses::default();
        for batch in &batches {
            let l = self.step(batch)?.losses;
            sum.l_cls += l.l_cls;
            sum.l_scl += l.l_scl;
            sum.l_ocl += l.l_ocl;
            sum.l_d += l.l_d;
            sum.l_g_adv += l.l_g_adv;
            sum.l_cls_re += l.l_cls_re;
            sum.total += l.total;
        }
        let n = batches.len() as f64;
        Ok(StepLosses {
            l_cls: sum.l_cls / n,
            l_scl: sum.l_scl / n,
            l_ocl: sum.l_ocl / n,
            l_d: sum.l_d / n,
            l_g_adv: sum.l_g_adv / n,
            l_cls_re: sum.l_cls_re / n,
            total: sum.total / n,
        })
    }

    pub fn val_auc(&self) -> Result<f64> {
        Ok(eval::evaluate(&self.model.scen, self.bundle, Split::Val)?.auc)
    }

    /// All configured epochs, keeping the snapshot with the best validation AUC
    /// (the initial model competes too; ties keep the earlier one).
    pub fn fit(mut self) -> Result<TrainOutcome> {
        let init_val_auc = self.val_auc()?;
        let mut best = self.model.clone();
        let mut best_val_auc = init_val_auc;
        let mut best_epoch = 0;
        let mut log = Vec::with_capacity(self.cfg.epochs);
        for epoch in 1..=self.cfg.epochs {
            let l = self.run_epoch()?;
            let val_auc = self.val_auc()?;
            log.push(EpochLog {
                epoch,
                l_cls: l.l_cls,
                l_scl: l.l_scl,
                l_ocl: l.l_ocl,
                l_d: l.l_d,
                l_g_adv: l.l_g_adv,
                l_cls_re: l.l_cls_re,
                val_auc,
            });
            if val_auc > best_val_auc {
                best_val_auc = val_auc;
                best = self.model.clone();
                best_epoch = epoch;
            }
        }
        Ok(TrainOutcome {
            log,
            init_val_auc,
            best,
            best_epoch,
            best_val_auc,
            final_model: self.model,
        })
    }
}

/// Trains a fresh model on `bundle`.
pub fn train(cfg: &TrainConfig, bundle: &DatasetBundle) -> Result<TrainOutcome> {
    Trainer::new(*cfg, bundle)?.fit()
}
