//! Run configuration: defaults, `key = value` files, `SCEN_SEED`, and
//! command-line flags, applied in that order.

use std::fmt::Write as _;
use std::path::PathBuf;

use scen_core::data::SyntheticConfig;
use scen_core::model::ContrastiveConfig;
use scen_core::optim::AdamConfig;
use scen_core::stm::{GanMode, StmWeights};
use scen_core::train::{TrainConfig, Variant};
use scen_core::Split;

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "SCEN_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub metadata: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub n_states: usize,
    pub n_objects: usize,
    pub seen_fraction: f64,
    pub samples_per_pair: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub latent_dim: usize,
    pub mixing_gain: f64,
    pub data_seed: u64,
    pub embed_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub proto_dim: usize,
    pub classifier_depth: usize,
    pub stm_hidden: Option<usize>,
    pub tau_s: f64,
    pub tau_o: f64,
    pub k: usize,
    pub normalize: bool,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub gan_mode: GanMode,
    pub deterministic: bool,
    pub n_seeds: usize,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub split: Split,
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let syn = SyntheticConfig::default();
        let tc = TrainConfig::default();
        Self {
            metadata: None,
            features: None,
            n_states: syn.n_states,
            n_objects: syn.n_objects,
            seen_fraction: syn.seen_fraction,
            samples_per_pair: syn.samples_per_pair,
            feature_dim: syn.feature_dim,
            noise_sigma: syn.noise_sigma,
            latent_dim: syn.latent_dim,
            mixing_gain: syn.mixing_gain,
            data_seed: syn.seed,
            embed_dim: tc.embed_dim,
            hidden: tc.hidden,
            proto_dim: tc.proto_dim,
            classifier_depth: tc.classifier_depth,
            stm_hidden: tc.stm_hidden,
            tau_s: tc.contrastive.tau_s,
            tau_o: tc.contrastive.tau_o,
            k: tc.contrastive.k,
            normalize: tc.contrastive.normalize,
            alpha: tc.weights.alpha,
            beta: tc.weights.beta,
            lr: tc.adam.lr,
            beta1: tc.adam.beta1,
            beta2: tc.adam.beta2,
            eps: tc.adam.eps,
            batch_size: tc.batch_size,
            epochs: tc.epochs,
            seed: tc.seed,
            variant: tc.variant,
            gan_mode: tc.gan_mode,
            deterministic: tc.deterministic,
            n_seeds: 5,
            out_dir: PathBuf::from("."),
            checkpoint: None,
            split: Split::Test,
            force: false,
        }
    }
}

/// Every configuration key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("metadata", "dataset metadata file (synthetic data is generated when unset)"),
    ("features", "dataset features file"),
    ("n_states", "synthetic: number of states"),
    ("n_objects", "synthetic: number of objects"),
    ("seen_fraction", "synthetic: fraction of pairs that are seen"),
    ("samples_per_pair", "synthetic: images per pair"),
    ("feature_dim", "synthetic: feature dimension"),
    ("noise_sigma", "synthetic: feature noise standard deviation"),
    ("latent_dim", "synthetic: latent dimension per primitive"),
    ("mixing_gain", "synthetic: pre-tanh mixing scale"),
    ("data_seed", "synthetic: generator seed used by train and ablate"),
    ("embed_dim", "projection width (auto = feature dimension)"),
    ("hidden", "encoder hidden width (auto = 2 * proto_dim)"),
    ("proto_dim", "prototype dimension"),
    ("classifier_depth", "linear layers per classifier"),
    ("stm_hidden", "generator/discriminator hidden width (auto = encoder hidden)"),
    ("tau_s", "state-space temperature"),
    ("tau_o", "object-space temperature"),
    ("k", "negatives per anchor"),
    ("normalize", "L2-normalise prototypes in contrastive losses"),
    ("alpha", "weight of the contrastive-space loss"),
    ("beta", "weight of the state transition loss"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("eps", "Adam epsilon"),
    ("batch_size", "anchors per batch"),
    ("epochs", "training epochs"),
    ("seed", "run seed (data seed for gen-data)"),
    ("variant", "base, cts, stm or full"),
    ("gan_mode", "saturating or non-saturating"),
    ("deterministic", "bitwise reproducible execution"),
    ("n_seeds", "ablate: consecutive seeds starting at seed"),
    ("out_dir", "output directory"),
    ("checkpoint", "eval: checkpoint file"),
    ("split", "eval: val or test"),
    ("force", "overwrite existing outputs"),
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("`{key}` expects a number, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!("`{key}` expects true or false, got `{v}`"))),
    }
}

fn parse_auto(key: &str, v: &str) -> Result<Option<usize>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn parse_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".into(), |x| x.to_string())
}

fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "metadata" => self.metadata = parse_path(v),
            "features" => self.features = parse_path(v),
            "n_states" => self.n_states = parse_num(key, v)?,
            "n_objects" => self.n_objects = parse_num(key, v)?,
            "seen_fraction" => self.seen_fraction = parse_num(key, v)?,
            "samples_per_pair" => self.samples_per_pair = parse_num(key, v)?,
            "feature_dim" => self.feature_dim = parse_num(key, v)?,
            "noise_sigma" => self.noise_sigma = parse_num(key, v)?,
            "latent_dim" => self.latent_dim = parse_num(key, v)?,
            "mixing_gain" => self.mixing_gain = parse_num(key, v)?,
            "data_seed" => self.data_seed = parse_num(key, v)?,
            "embed_dim" => self.embed_dim = parse_auto(key, v)?,
            "hidden" => self.hidden = parse_auto(key, v)?,
            "proto_dim" => self.proto_dim = parse_num(key, v)?,
            "classifier_depth" => self.classifier_depth = parse_num(key, v)?,
            "stm_hidden" => self.stm_hidden = parse_auto(key, v)?,
            "tau_s" => self.tau_s = parse_num(key, v)?,
            "tau_o" => self.tau_o = parse_num(key, v)?,
            "k" => self.k = parse_num(key, v)?,
            "normalize" => self.normalize = parse_bool(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "beta1" => self.beta1 = parse_num(key, v)?,
            "beta2" => self.beta2 = parse_num(key, v)?,
            "eps" => self.eps = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "variant" => self.variant = Variant::parse(v)?,
            "gan_mode" => self.gan_mode = GanMode::parse(v)?,
            "deterministic" => self.deterministic = parse_bool(key, v)?,
            "n_seeds" => self.n_seeds = parse_num(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "checkpoint" => self.checkpoint = parse_path(v),
            "split" => {
                self.split = Split::parse(v).ok_or_else(|| Error::config(format!("unknown split `{v}`")))?;
            }
            "force" => self.force = parse_bool(key, v)?,
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "metadata" => show_path(&self.metadata),
            "features" => show_path(&self.features),
            "n_states" => self.n_states.to_string(),
            "n_objects" => self.n_objects.to_string(),
            "seen_fraction" => self.seen_fraction.to_string(),
            "samples_per_pair" => self.samples_per_pair.to_string(),
            "feature_dim" => self.feature_dim.to_string(),
            "noise_sigma" => self.noise_sigma.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "mixing_gain" => self.mixing_gain.to_string(),
            "data_seed" => self.data_seed.to_string(),
            "embed_dim" => show_auto(self.embed_dim),
            "hidden" => show_auto(self.hidden),
            "proto_dim" => self.proto_dim.to_string(),
            "classifier_depth" => self.classifier_depth.to_string(),
            "stm_hidden" => show_auto(self.stm_hidden),
            "tau_s" => self.tau_s.to_string(),
            "tau_o" => self.tau_o.to_string(),
            "k" => self.k.to_string(),
            "normalize" => self.normalize.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "eps" => self.eps.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "variant" => self.variant.as_str().into(),
            "gan_mode" => self.gan_mode.as_str().into(),
            "deterministic" => self.deterministic.to_string(),
            "n_seeds" => self.n_seeds.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "checkpoint" => show_path(&self.checkpoint),
            "split" => self.split.as_str().into(),
            "force" => self.force.to_string(),
            _ => return None,
        })
    }

    /// Applies a `key = value` file. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config { line: Some(i + 1), msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config { msg, .. } => at(msg),
                other => at(other.to_string()),
            })?;
        }
        Ok(())
    }

    pub fn apply_env(&mut self, seed: Option<&str>) -> Result<()> {
        if let Some(s) = seed {
            self.seed = parse_num(SEED_ENV, s)?;
        }
        Ok(())
    }

    /// Every key, one per line, readable by [`RunConfig::apply_text`].
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, _) in KEYS {
            writeln!(s, "{k} = {}", self.get(k).unwrap()).unwrap();
        }
        s
    }

    pub fn synthetic(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_states: self.n_states,
            n_objects: self.n_objects,
            seen_fraction: self.seen_fraction,
            samples_per_pair: self.samples_per_pair,
            feature_dim: self.feature_dim,
            noise_sigma: self.noise_sigma,
            seed,
            latent_dim: self.latent_dim,
            mixing_gain: self.mixing_gain,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            proto_dim: self.proto_dim,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            classifier_depth: self.classifier_depth,
            stm_hidden: self.stm_hidden,
            contrastive: ContrastiveConfig {
                tau_s: self.tau_s,
                tau_o: self.tau_o,
                k: self.k,
                normalize: self.normalize,
            },
            weights: StmWeights {
                alpha: self.alpha,
                beta: self.beta,
            },
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            variant: self.variant,
            gan_mode: self.gan_mode,
            deterministic: self.deterministic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("hidden", "17").unwrap();
        c.set("variant", "cts").unwrap();
        c.set("metadata", "data/meta.txt").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.render()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn every_key_settable() {
        let c = RunConfig::default();
        for (k, _) in KEYS {
            let mut d = RunConfig::default();
            d.set(k, &c.get(k).unwrap()).unwrap();
            assert_eq!(c, d, "{k}");
        }
    }

    #[test]
    fn file_errors_name_the_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("# comment\nlr = 0.1\nbogus = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: Some(3), .. }), "{e}");
        let e = c.apply_text("epochs: 3").unwrap_err();
        assert!(matches!(e, Error::Config { line: Some(1), .. }));
        assert_eq!(c.lr, 0.1);
    }

    #[test]
    fn comments_and_env() {
        let mut c = RunConfig::default();
        c.apply_text("seed = 4  # trailing\n\n").unwrap();
        assert_eq!(c.seed, 4);
        c.apply_env(Some("9")).unwrap();
        assert_eq!(c.seed, 9);
        assert!(c.apply_env(Some("x")).is_err());
    }
}
