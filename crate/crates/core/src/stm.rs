//! State transition module: a generator that composes an object prototype
//! with another state's prototype into a virtual feature vector, and a
//! discriminator that separates real features from generated ones.
//!
//! The discriminator returns logits; every `log D` and `log(1 - D)` term is
//! computed as a log-sigmoid of the logit so the losses stay finite.

use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::{cross_entropy, BoundScen};
use crate::nn::{BoundMlp, Linear, Mlp};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct StmParams {
    /// `concat(h~_s, h_o)` (2 x proto) -> hidden -> feature_dim.
    pub g: Mlp,
    /// feature_dim -> hidden -> 1 logit.
    pub d: Mlp,
}

impl StmParams {
    pub fn init<R: Rng + ?Sized>(proto_dim: usize, feature_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            g: Mlp::init(&[2 * proto_dim, hidden, feature_dim], rng)?,
            d: Mlp::init(&[feature_dim, hidden, 1], rng)?,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(proto_dim: usize, feature_dim: usize, hidden: usize) -> Result<Self> {
        let zeros = |d: &[usize]| Mlp::from_layers(d.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect());
        Ok(Self {
            g: zeros(&[2 * proto_dim, hidden, feature_dim])?,
            d: zeros(&[feature_dim, hidden, 1])?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.g.layers[0].out_dim()
    }

    pub fn bind(&self, g: &mut Graph, train_generator: bool, train_discriminator: bool) -> BoundStm {
        BoundStm {
            g: self.g.bind(g, train_generator),
            d: self.d.bind(g, train_discriminator),
        }
    }

    /// Generator tensors then discriminator tensors.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.g.tensors();
        v.extend(self.d.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.g.tensors_mut();
        v.extend(self.d.tensors_mut());
        v
    }

    /// Discriminator probabilities for the rows of `x`.
    pub fn discriminate(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, false, false);
        let xv = g.constant(x.clone());
        let logits = b.d.forward(&mut g, xv)?;
        let p = g.sigmoid(logits);
        Ok(g.value(p).data().to_vec())
    }
}

#[derive(Debug, Clone)]
pub struct BoundStm {
    pub g: BoundMlp,
    pub d: BoundMlp,
}

impl BoundStm {
    /// Virtual features `G(h~_s, h_o)`, `[n, feature_dim]`.
    pub fn generate(&self, g: &mut Graph, h_tilde_s: Var, h_o: Var) -> Result<Var> {
        let z = g.concat(h_tilde_s, h_o)?;
        self.g.forward(g, z)
    }

    pub fn logits(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.d.forward(g, x)
    }
}

/// Generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GanMode {
    /// `mean log(1 - D(G(.)))`, the literal minimax term.
    Saturating,
    /// `-mean log D(G(.))`.
    #[default]
    NonSaturating,
}

impl GanMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "saturating" => Ok(Self::Saturating),
            "non-saturating" | "non_saturating" => Ok(Self::NonSaturating),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown gan_mode `{other}` (expected saturating or non-saturating)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Saturating => "saturating",
            Self::NonSaturating => "non-saturating",
        }
    }
}

/// `-mean log D(real) - mean log(1 - D(fake))`. Pass `fake` through
/// [`Graph::detach`] so only the discriminator is updated.
pub fn discriminator_loss(g: &mut Graph, stm: &BoundStm, real: Var, fake: Var) -> Result<Var> {
    let lr = stm.logits(g, real)?;
    let lf = stm.logits(g, fake)?;
    let log_d_real = g.log_sigmoid(lr);
    let neg_lf = g.scale(lf, -1.0);
    let log_not_d_fake = g.log_sigmoid(neg_lf);
    let a = g.mean(log_d_real);
    let b = g.mean(log_not_d_fake);
    let s = g.add(a, b)?;
    Ok(g.scale(s, -1.0))
}

pub fn generator_adversarial_loss(g: &mut Graph, stm: &BoundStm, fake: Var, mode: GanMode) -> Result<Var> {
    let l = stm.logits(g, fake)?;
    Ok(match mode {
        GanMode::Saturating => {
            let neg = g.scale(l, -1.0);
            let t = g.log_sigmoid(neg);
            g.mean(t)
        }
        GanMode::NonSaturating => {
            let t = g.log_sigmoid(l);
            let m = g.mean(t);
            g.scale(m, -1.0)
        }
    })
}

/// Re-encodes `fake` through the same projection and encoders as real data
/// and classifies it against the transition states and anchor objects.
pub fn reclassification_loss(g: &mut Graph, scen: &BoundScen, fake: Var, states: &[usize], objects: &[usize]) -> Result<Var> {
    let (h_s, h_o) = scen.encode(g, fake)?;
    let ls = scen.c_a.forward(g, h_s)?;
    let lo = scen.c_o.forward(g, h_o)?;
    let a = cross_entropy(g, ls, states, "state")?;
    let b = cross_entropy(g, lo, objects, "object")?;
    g.add(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StmWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for StmWeights {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.5 }
    }
}

impl StmWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "alpha and beta must be finite and non-negative, got {} and {}",
                self.alpha,
                self.beta
            )));
        }
        Ok(())
    }
}

/// `alpha * L_cts + beta * L_stm`, skipping terms whose weight is zero.
pub fn total_loss(g: &mut Graph, w: &StmWeights, cts: Var, stm: Option<Var>) -> Result<Var> {
    let a = g.scale(cts, w.alpha);
    match stm {
        Some(s) if w.beta != 0.0 => {
            let b = g.scale(s, w.beta);
            g.add(a, b)
        }
        _ => Ok(a),
    }
}

/// Scalar form of [`total_loss`].
pub fn total_loss_value(w: &StmWeights, cts: f64, stm: f64) -> f64 {
    w.alpha * cts + w.beta * stm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use crate::nn::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Discriminator whose output is exactly 0.5 everywhere.
    fn half_stm(feature_dim: usize) -> StmParams {
        let zero = |a, b| Mlp::from_layers(alloc::vec![Linear::zeros(a, 3), Linear::zeros(3, b)]).unwrap();
        StmParams {
            g: zero(4, feature_dim),
            d: zero(feature_dim, 1),
        }
    }

    #[test]
    fn constant_half_discriminator() {
        let p = half_stm(2);
        let mut g = Graph::new();
        let b = p.bind(&mut g, true, true);
        let real = g.constant(Tensor::matrix(2, 2, alloc::vec![0.3, -1.0, 2.0, 0.0]).unwrap());
        let fake = g.constant(Tensor::matrix(1, 2, alloc::vec![5.0, 5.0]).unwrap());
        let ld = discriminator_loss(&mut g, &b, real, fake).unwrap();
        assert!((g.value(ld).item() - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
        let sat = generator_adversarial_loss(&mut g, &b, fake, GanMode::Saturating).unwrap();
        let ns = generator_adversarial_loss(&mut g, &b, fake, GanMode::NonSaturating).unwrap();
        assert!((g.value(sat).item() + core::f64::consts::LN_2).abs() < 1e-12);
        assert!((g.value(ns).item() - core::f64::consts::LN_2).abs() < 1e-12);
    }

    fn with_output_bias(bias: f64) -> StmParams {
        let mut p = half_stm(2);
        p.d.layers[1].bias = Tensor::vector(alloc::vec![bias]);
        p
    }

    fn losses(p: &StmParams) -> (f64, f64, f64) {
        let mut g = Graph::new();
        let b = p.bind(&mut g, false, false);
        let x = g.constant(Tensor::matrix(1, 2, alloc::vec![1.0, 1.0]).unwrap());
        let ld = discriminator_loss(&mut g, &b, x, x).unwrap();
        let sat = generator_adversarial_loss(&mut g, &b, x, GanMode::Saturating).unwrap();
        let ns = generator_adversarial_loss(&mut g, &b, x, GanMode::NonSaturating).unwrap();
        (g.value(ld).item(), g.value(sat).item(), g.value(ns).item())
    }

    #[test]
    fn both_generator_losses_fall_as_d_of_fake_rises() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for bias in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let (_, sat, ns) = losses(&with_output_bias(bias));
            assert!(sat < prev.0 && ns < prev.1);
            prev = (sat, ns);
        }
    }

    #[test]
    fn optimal_discriminator_limit() {
        // hidden = [relu(x), relu(-x), 0], logit = relu(x) - relu(-x) = x
        let mut p = half_stm(1);
        p.d.layers[0].weight = Tensor::matrix(1, 3, alloc::vec![1.0, -1.0, 0.0]).unwrap();
        p.d.layers[1].weight = Tensor::matrix(3, 1, alloc::vec![1.0, -1.0, 0.0]).unwrap();
        let mut last = f64::INFINITY;
        for s in [1.0, 10.0, 100.0, 700.0] {
            let mut g = Graph::new();
            let b = p.bind(&mut g, false, false);
            let real = g.constant(Tensor::matrix(1, 1, alloc::vec![s]).unwrap());
            let fake = g.constant(Tensor::matrix(1, 1, alloc::vec![-s]).unwrap());
            let ld = discriminator_loss(&mut g, &b, real, fake).unwrap();
            let v = g.value(ld).item();
            assert!(v.is_finite() && v >= 0.0 && v < last);
            assert!((v - 2.0 * math::ln_1p(math::exp(-s))).abs() < 1e-15);
            last = v;
        }
        assert!(last < 1e-300);
    }

    #[test]
    fn discriminator_output_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = StmParams::init(4, 6, 8, &mut rng).unwrap();
        let x = Tensor::matrix(50, 6, (0..300).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap();
        for d in p.discriminate(&x).unwrap() {
            assert!(d > 0.0 && d < 1.0);
        }
    }

    #[test]
    fn zero_generator_outputs_bias() {
        let mut p = half_stm(2);
        p.g.layers[1].bias = Tensor::vector(alloc::vec![0.25, -0.5]);
        let mut g = Graph::new();
        let b = p.bind(&mut g, false, false);
        let hs = g.constant(Tensor::matrix(1, 2, alloc::vec![1.0, 2.0]).unwrap());
        let ho = g.constant(Tensor::matrix(1, 2, alloc::vec![3.0, 4.0]).unwrap());
        let x = b.generate(&mut g, hs, ho).unwrap();
        assert_eq!(g.value(x).data(), &[0.25, -0.5]);
        let bad = g.constant(Tensor::matrix(1, 3, alloc::vec![0.0; 3]).unwrap());
        assert!(b.generate(&mut g, hs, bad).is_err());
    }

    #[test]
    fn gan_mode_parse() {
        assert_eq!(GanMode::parse("saturating").unwrap(), GanMode::Saturating);
        assert_eq!(GanMode::parse("non-saturating").unwrap(), GanMode::NonSaturating);
        assert!(GanMode::parse("hinge").is_err());
    }

    #[test]
    fn weighted_sums() {
        let w = StmWeights { alpha: 0.1, beta: 0.5 };
        assert!((total_loss_value(&w, 2.0, 3.0) - 1.7).abs() < 1e-15);
        let zero = StmWeights { alpha: 0.0, beta: 0.0 };
        assert_eq!(total_loss_value(&zero, 123.0, 456.0), 0.0);
        let mut g = Graph::new();
        let cts = g.constant(Tensor::scalar(2.2));
        let stm = g.constant(Tensor::scalar(9.0));
        let one = StmWeights { alpha: 1.0, beta: 0.0 };
        let t = total_loss(&mut g, &one, cts, Some(stm)).unwrap();
        assert_eq!(g.value(t).item(), 2.2);
        let t = total_loss(&mut g, &zero, cts, Some(stm)).unwrap();
        assert_eq!(g.value(t).item(), 0.0);
        assert!(StmWeights { alpha: -1.0, beta: 0.0 }.validate().is_err());
    }
}
