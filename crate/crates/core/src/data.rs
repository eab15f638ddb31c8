//! Compositional datasets, per-anchor specific databases, batch sampling and
//! the synthetic desk-scale generator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// A `(state, object)` pair; orders by state id, then object id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompositionLabel {
    pub state: usize,
    pub object: usize,
}

impl CompositionLabel {
    pub const fn new(state: usize, object: usize) -> Self {
        Self { state, object }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Feature vectors with composition labels, pair sets and split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    state_names: Vec<String>,
    object_names: Vec<String>,
    features: Tensor,
    labels: Vec<CompositionLabel>,
    seen_pairs: BTreeSet<CompositionLabel>,
    unseen_pairs: BTreeSet<CompositionLabel>,
    splits: Vec<Split>,
}

impl DatasetBundle {
    pub fn new(
        state_names: Vec<String>,
        object_names: Vec<String>,
        features: Tensor,
        labels: Vec<CompositionLabel>,
        seen_pairs: BTreeSet<CompositionLabel>,
        unseen_pairs: BTreeSet<CompositionLabel>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDataset(msg));
        if state_names.is_empty() || object_names.is_empty() {
            return bad("empty state or object vocabulary".into());
        }
        if features.rank() != 2 || features.rows() != labels.len() || labels.len() != splits.len() {
            return bad(format!(
                "{} feature rows, {} labels, {} split tags",
                features.rows(),
                labels.len(),
                splits.len()
            ));
        }
        let in_vocab = |p: &CompositionLabel| p.state < state_names.len() && p.object < object_names.len();
        for p in seen_pairs.iter().chain(&unseen_pairs) {
            if !in_vocab(p) {
                return bad(format!("pair ({}, {}) outside the vocabulary", p.state, p.object));
            }
        }
        if let Some(p) = seen_pairs.intersection(&unseen_pairs).next() {
            return bad(format!("pair ({}, {}) is both seen and unseen", p.state, p.object));
        }
        for (i, (label, split)) in labels.iter().zip(&splits).enumerate() {
            if !in_vocab(label) {
                return bad(format!("image {i} label outside the vocabulary"));
            }
            let ok = match split {
                Split::Train => seen_pairs.contains(label),
                _ => seen_pairs.contains(label) || unseen_pairs.contains(label),
            };
            if !ok {
                return bad(format!(
                    "image {i} ({}) has label ({}, {}) outside its allowed pair set",
                    split.as_str(),
                    label.state,
                    label.object
                ));
            }
        }
        if !features.all_finite() {
            return bad("non-finite feature value".into());
        }
        Ok(Self {
            state_names,
            object_names,
            features,
            labels,
            seen_pairs,
            unseen_pairs,
            splits,
        })
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn object_names(&self) -> &[String] {
        &self.object_names
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_objects(&self) -> usize {
        self.object_names.len()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[CompositionLabel] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> CompositionLabel {
        self.labels[i]
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn n_images(&self) -> usize {
        self.labels.len()
    }

    pub fn seen_pairs(&self) -> &BTreeSet<CompositionLabel> {
        &self.seen_pairs
    }

    pub fn unseen_pairs(&self) -> &BTreeSet<CompositionLabel> {
        &self.unseen_pairs
    }

    pub fn is_seen(&self, p: &CompositionLabel) -> bool {
        self.seen_pairs.contains(p)
    }

    /// Seen and unseen pairs in `(state, object)` order.
    pub fn candidate_pairs(&self) -> Vec<CompositionLabel> {
        self.seen_pairs.union(&self.unseen_pairs).copied().collect()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.n_images()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Image and pair counts per split, in the layout of a dataset summary table.
    pub fn split_stats(&self) -> SplitStats {
        let mut stats = SplitStats {
            n_states: self.n_states(),
            n_objects: self.n_objects(),
            ..SplitStats::default()
        };
        for split in [Split::Train, Split::Val, Split::Test] {
            let mut seen = BTreeSet::new();
            let mut unseen = BTreeSet::new();
            let mut n = 0;
            for i in self.indices(split) {
                n += 1;
                let l = self.labels[i];
                if self.is_seen(&l) {
                    seen.insert(l);
                } else {
                    unseen.insert(l);
                }
            }
            let row = SplitCounts {
                seen_pairs: seen.len(),
                unseen_pairs: unseen.len(),
                images: n,
            };
            match split {
                Split::Train => stats.train = row,
                Split::Val => stats.val = row,
                Split::Test => stats.test = row,
            }
        }
        stats
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitCounts {
    pub seen_pairs: usize,
    pub unseen_pairs: usize,
    pub images: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitStats {
    pub n_states: usize,
    pub n_objects: usize,
    pub train: SplitCounts,
    pub val: SplitCounts,
    pub test: SplitCounts,
}

/// Index sets for one anchor image, all over train-split images and sorted
/// ascending. The anchor itself is never included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecificDatabases {
    /// Same state, any object.
    pub state_db: Vec<usize>,
    /// Same object, any state.
    pub object_db: Vec<usize>,
    /// Different state and different object.
    pub irrelevant_db: Vec<usize>,
}

impl SpecificDatabases {
    pub fn has_state_positive(&self) -> bool {
        !self.state_db.is_empty()
    }

    pub fn has_object_positive(&self) -> bool {
        !self.object_db.is_empty()
    }

    pub fn has_negatives(&self) -> bool {
        !self.irrelevant_db.is_empty()
    }

    /// Usable as an anchor in both contrastive losses.
    pub fn is_contrastive_ready(&self) -> bool {
        self.has_state_positive() && self.has_object_positive() && self.has_negatives()
    }
}

/// Train-split images grouped by state, object and full label.
#[derive(Debug, Clone)]
struct TrainIndex {
    train: Vec<usize>,
    by_state: Vec<Vec<usize>>,
    by_object: Vec<Vec<usize>>,
    by_label: BTreeMap<CompositionLabel, Vec<usize>>,
}

impl TrainIndex {
    fn new(bundle: &DatasetBundle) -> Self {
        let mut idx = Self {
            train: Vec::new(),
            by_state: vec![Vec::new(); bundle.n_states()],
            by_object: vec![Vec::new(); bundle.n_objects()],
            by_label: BTreeMap::new(),
        };
        for i in bundle.indices(Split::Train) {
            let l = bundle.label(i);
            idx.train.push(i);
            idx.by_state[l.state].push(i);
            idx.by_object[l.object].push(i);
            idx.by_label.entry(l).or_default().push(i);
        }
        idx
    }

    fn irrelevant(&self, label: CompositionLabel) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .by_label
            .iter()
            .filter(|(l, _)| l.state != label.state && l.object != label.object)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    fn databases(&self, anchor: usize, label: CompositionLabel) -> SpecificDatabases {
        let without = |v: &[usize]| v.iter().copied().filter(|&i| i != anchor).collect();
        SpecificDatabases {
            state_db: without(&self.by_state[label.state]),
            object_db: without(&self.by_object[label.object]),
            irrelevant_db: self.irrelevant(label),
        }
    }
}

/// Specific databases of one train-split anchor image.
pub fn build_specific_databases(bundle: &DatasetBundle, anchor: usize) -> Result<SpecificDatabases> {
    if anchor >= bundle.n_images() || bundle.split(anchor) != Split::Train {
        return Err(Error::NotTrainImage(anchor));
    }
    Ok(TrainIndex::new(bundle).databases(anchor, bundle.label(anchor)))
}

/// Contrastive sampling for one anchor row of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveRow {
    /// Position of the anchor within [`TrainBatch::anchors`].
    pub row: usize,
    pub state_positive: usize,
    pub object_positive: usize,
    negatives: Vec<usize>,
}

impl ContrastiveRow {
    /// Negatives of the state space. The same slice as [`Self::object_negatives`].
    pub fn state_negatives(&self) -> &[usize] {
        &self.negatives
    }

    /// Negatives of the object space. The same slice as [`Self::state_negatives`].
    pub fn object_negatives(&self) -> &[usize] {
        &self.negatives
    }
}

/// One optimisation batch. All entries are image indices into the bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainBatch {
    pub anchors: Vec<usize>,
    /// Per anchor, a train image whose state differs from the anchor's.
    pub transitions: Vec<usize>,
    /// Rows whose anchors have non-empty state, object and irrelevant databases.
    pub contrastive: Vec<ContrastiveRow>,
    pub k: usize,
}

/// Anchor/positive/negative sampler over the train split of a bundle.
#[derive(Debug, Clone)]
pub struct Sampler {
    index: TrainIndex,
    labels: Vec<CompositionLabel>,
    irrelevant: BTreeMap<CompositionLabel, Vec<usize>>,
    eligible: Vec<usize>,
}

impl Sampler {
    pub fn new(bundle: &DatasetBundle) -> Result<Self> {
        let index = TrainIndex::new(bundle);
        if index.train.is_empty() {
            return Err(Error::InvalidDataset("train split is empty".into()));
        }
        if index.by_state.iter().filter(|v| !v.is_empty()).count() < 2 {
            return Err(Error::InvalidDataset(
                "train split needs at least two states for state transitions".into(),
            ));
        }
        let irrelevant: BTreeMap<_, _> = index.by_label.keys().map(|&l| (l, index.irrelevant(l))).collect();
        let eligible = index
            .train
            .iter()
            .copied()
            .filter(|&i| {
                let l = bundle.label(i);
                index.by_state[l.state].len() > 1 && index.by_object[l.object].len() > 1 && !irrelevant[&l].is_empty()
            })
            .collect();
        Ok(Self {
            index,
            labels: bundle.labels().to_vec(),
            irrelevant,
            eligible,
        })
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.index.train
    }

    /// Train images usable as contrastive anchors.
    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    pub fn is_eligible(&self, i: usize) -> bool {
        self.eligible.binary_search(&i).is_ok()
    }

    pub fn databases(&self, anchor: usize) -> SpecificDatabases {
        self.index.databases(anchor, self.labels[anchor])
    }

    /// `batch_size` distinct eligible anchors (all of them if fewer) with
    /// their positives, shared negatives and transition partners.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, k: usize, rng: &mut R) -> Result<TrainBatch> {
        if self.eligible.is_empty() {
            return Err(Error::NoEligibleAnchors);
        }
        let n = batch_size.min(self.eligible.len());
        let anchors: Vec<usize> = rand::seq::index::sample(rng, self.eligible.len(), n)
            .into_iter()
            .map(|j| self.eligible[j])
            .collect();
        self.batch_for_anchors(&anchors, k, rng)
    }

    /// Shuffled pass over every train image, chunked into batches.
    pub fn epoch<R: Rng + ?Sized>(&self, batch_size: usize, k: usize, rng: &mut R) -> Result<Vec<TrainBatch>> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        let mut order = self.index.train.clone();
        order.shuffle(rng);
        order.chunks(batch_size).map(|c| self.batch_for_anchors(c, k, rng)).collect()
    }

    /// Samples partners for the given train-split anchors. Anchors that are
    /// not eligible get a transition partner but no contrastive row.
    pub fn batch_for_anchors<R: Rng + ?Sized>(&self, anchors: &[usize], k: usize, rng: &mut R) -> Result<TrainBatch> {
        if k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        let mut transitions = Vec::with_capacity(anchors.len());
        let mut contrastive = Vec::new();
        for (row, &a) in anchors.iter().enumerate() {
            let label = *self.labels.get(a).ok_or(Error::NotTrainImage(a))?;
            if self.index.by_state[label.state].binary_search(&a).is_err() {
                return Err(Error::NotTrainImage(a));
            }
            transitions.push(self.transition_partner(label.state, rng));
            if !self.is_eligible(a) {
                continue;
            }
            let state_positive = pick_excluding(&self.index.by_state[label.state], a, rng);
            let object_positive = pick_excluding(&self.index.by_object[label.object], a, rng);
            let pool = &self.irrelevant[&label];
            let negatives = if pool.len() >= k {
                rand::seq::index::sample(rng, pool.len(), k)
                    .into_iter()
                    .map(|j| pool[j])
                    .collect()
            } else {
                (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect()
            };
            contrastive.push(ContrastiveRow {
                row,
                state_positive,
                object_positive,
                negatives,
            });
        }
        Ok(TrainBatch {
            anchors: anchors.to_vec(),
            transitions,
            contrastive,
            k,
        })
    }

    /// Uniform over train images whose state differs from `state`.
    fn transition_partner<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let total = self.index.train.len() - self.index.by_state[state].len();
        let mut r = rng.random_range(0..total);
        for (s, group) in self.index.by_state.iter().enumerate() {
            if s == state {
                continue;
            }
            if r < group.len() {
                return group[r];
            }
            r -= group.len();
        }
        unreachable!("rank is below the number of candidates")
    }
}

/// Uniform element of sorted `pool` other than `skip` (which is in `pool`).
fn pick_excluding<R: Rng + ?Sized>(pool: &[usize], skip: usize, rng: &mut R) -> usize {
    let pos = pool.binary_search(&skip).expect("anchor belongs to its own group");
    let j = rng.random_range(0..pool.len() - 1);
    if j < pos {
        pool[j]
    } else {
        pool[j + 1]
    }
}

/// Parameters of the synthetic compositional dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_states: usize,
    pub n_objects: usize,
    pub seen_fraction: f64,
    pub samples_per_pair: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Dimensionality of each state and object latent vector.
    pub latent_dim: usize,
    /// Standard deviation of the mixing pre-activations before `tanh`.
    pub mixing_gain: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_states: 8,
            n_objects: 10,
            seen_fraction: 0.75,
            samples_per_pair: 40,
            feature_dim: 32,
            noise_sigma: 0.1,
            seed: 0,
            latent_dim: 8,
            mixing_gain: 4.0,
        }
    }
}

impl SyntheticConfig {
    pub fn n_seen(&self) -> usize {
        let total = (self.n_states * self.n_objects) as f64;
        libm::round(self.seen_fraction * total) as usize
    }

    /// Per seen pair: (train, val, test) image counts.
    pub fn seen_split(&self) -> (usize, usize, usize) {
        let n = self.samples_per_pair;
        let val = n / 5;
        let test = n / 5;
        (n - val - test, val, test)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_states < 2 || self.n_objects < 2 {
            return bad("need at least two states and two objects".into());
        }
        if !(self.seen_fraction > 0.0 && self.seen_fraction < 1.0) {
            return bad(format!(
                "seen_fraction must lie strictly between 0 and 1 so that both seen and unseen pairs exist, got {}",
                self.seen_fraction
            ));
        }
        let n_seen = self.n_seen();
        let total = self.n_states * self.n_objects;
        if n_seen == 0 || n_seen >= total {
            return bad(format!("{n_seen} seen of {total} pairs leaves a pair set empty"));
        }
        if n_seen < 2 * self.n_states.max(self.n_objects) {
            return bad(format!(
                "{n_seen} seen pairs cannot cover every state and object at least twice"
            ));
        }
        if self.samples_per_pair < 5 {
            return bad("samples_per_pair must be at least 5 to populate train, val and test".into());
        }
        if self.feature_dim == 0 || self.latent_dim == 0 {
            return bad("feature_dim and latent_dim must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and non-negative, got {}", self.noise_sigma));
        }
        if !(self.mixing_gain > 0.0 && self.mixing_gain.is_finite()) {
            return bad(format!("mixing_gain must be positive, got {}", self.mixing_gain));
        }
        Ok(())
    }
}

fn covers_twice(pairs: &[CompositionLabel], n_states: usize, n_objects: usize) -> bool {
    let mut s = vec![0usize; n_states];
    let mut o = vec![0usize; n_objects];
    for p in pairs {
        s[p.state] += 1;
        o[p.object] += 1;
    }
    s.iter().chain(&o).all(|&c| c >= 2)
}

/// Synthetic bundle: one latent vector per state and per object, features
/// `tanh(W [z_state; z_object]) + noise` with a single random mixing matrix.
///
/// Feature values are rounded to `f32` precision so that they survive the
/// on-disk feature format unchanged.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ns, no) = (cfg.n_states, cfg.n_objects);

    let mut all: Vec<CompositionLabel> = (0..ns)
        .flat_map(|s| (0..no).map(move |o| CompositionLabel::new(s, o)))
        .collect();
    let n_seen = cfg.n_seen();
    let mut seen = None;
    for _ in 0..1000 {
        all.shuffle(&mut rng);
        if covers_twice(&all[..n_seen], ns, no) {
            seen = Some(all[..n_seen].to_vec());
            break;
        }
    }
    let seen_list = seen.ok_or_else(|| {
        Error::InvalidConfig("could not draw seen pairs covering every state and object twice".into())
    })?;
    let seen_pairs: BTreeSet<_> = seen_list.into_iter().collect();
    let unseen_pairs: BTreeSet<_> = all.iter().copied().filter(|p| !seen_pairs.contains(p)).collect();

    let l = cfg.latent_dim;
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let z_state: Vec<Vec<f64>> = (0..ns).map(|_| (0..l).map(|_| normal()).collect()).collect();
    let z_object: Vec<Vec<f64>> = (0..no).map(|_| (0..l).map(|_| normal()).collect()).collect();
    let w_scale = cfg.mixing_gain / math::sqrt((2 * l) as f64);
    let mixing: Vec<f64> = (0..cfg.feature_dim * 2 * l).map(|_| normal() * w_scale).collect();

    let clean = |p: &CompositionLabel| -> Vec<f64> {
        let z: Vec<f64> = z_state[p.state].iter().chain(&z_object[p.object]).copied().collect();
        (0..cfg.feature_dim)
            .map(|r| {
                let row = &mixing[r * 2 * l..(r + 1) * 2 * l];
                math::tanh(row.iter().zip(&z).map(|(w, v)| w * v).sum())
            })
            .collect()
    };

    let (n_train, n_val, _) = cfg.seen_split();
    let n_unseen_val = cfg.samples_per_pair / 2;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for p in seen_pairs.union(&unseen_pairs) {
        let base = clean(p);
        let is_seen = seen_pairs.contains(p);
        for j in 0..cfg.samples_per_pair {
            let split = match (is_seen, j) {
                (true, j) if j < n_train => Split::Train,
                (true, j) if j < n_train + n_val => Split::Val,
                (false, j) if j < n_unseen_val => Split::Val,
                _ => Split::Test,
            };
            for &b in &base {
                let x = b + cfg.noise_sigma * normal();
                features.push(x as f32 as f64);
            }
            labels.push(*p);
            splits.push(split);
        }
    }
    let n = labels.len();
    let names = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
    DatasetBundle::new(
        names("s", ns),
        names("o", no),
        Tensor::new(vec![n, cfg.feature_dim], features)?,
        labels,
        seen_pairs,
        unseen_pairs,
        splits,
    )
}
