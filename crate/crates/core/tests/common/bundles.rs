//! Random dataset bundles and a brute-force scan of the specific databases.
//! Shared with the acceptance suite of the `scen` crate.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scen_core::data::SpecificDatabases;
use scen_core::{CompositionLabel, DatasetBundle, Split, Tensor};

/// A bundle with up to `max_states x max_objects` pairs and up to
/// `max_images` images; train images use seen pairs only.
pub fn random_bundle(seed: u64, max_states: usize, max_objects: usize, max_images: usize) -> DatasetBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.random_range(2..=max_states);
    let no = rng.random_range(2..=max_objects);
    let mut pairs: Vec<CompositionLabel> = (0..ns)
        .flat_map(|s| (0..no).map(move |o| CompositionLabel::new(s, o)))
        .collect();
    pairs.shuffle(&mut rng);
    let n_seen = rng.random_range(1..pairs.len());
    let seen: BTreeSet<_> = pairs[..n_seen].iter().copied().collect();
    let unseen: BTreeSet<_> = pairs[n_seen..].iter().copied().collect();
    let seen_list: Vec<_> = seen.iter().copied().collect();
    let n = rng.random_range(1..=max_images);
    let mut labels = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    for _ in 0..n {
        let split = match rng.random_range(0..10) {
            0..=5 => Split::Train,
            6 | 7 => Split::Val,
            _ => Split::Test,
        };
        let label = if split == Split::Train || rng.random_bool(0.5) {
            seen_list[rng.random_range(0..seen_list.len())]
        } else {
            pairs[rng.random_range(0..pairs.len())]
        };
        labels.push(label);
        splits.push(split);
    }
    let dim = 3;
    let feats = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    DatasetBundle::new(
        (0..ns).map(|i| format!("s{i}")).collect(),
        (0..no).map(|i| format!("o{i}")).collect(),
        Tensor::new(vec![n, dim], feats).unwrap(),
        labels,
        seen,
        unseen,
        splits,
    )
    .unwrap()
}

/// Three predicate scans over all train images.
pub fn brute_force_databases(bundle: &DatasetBundle, anchor: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let a = bundle.label(anchor);
    let mut ds = Vec::new();
    let mut d_o = Vec::new();
    let mut dir = Vec::new();
    for i in 0..bundle.n_images() {
        if bundle.split(i) != Split::Train {
            continue;
        }
        let l = bundle.label(i);
        if i != anchor && l.state == a.state {
            ds.push(i);
        }
        if i != anchor && l.object == a.object {
            d_o.push(i);
        }
        if l.state != a.state && l.object != a.object {
            dir.push(i);
        }
    }
    (ds, d_o, dir)
}

pub fn matches_oracle(bundle: &DatasetBundle, anchor: usize, db: &SpecificDatabases) -> bool {
    let (ds, d_o, dir) = brute_force_databases(bundle, anchor);
    db.state_db == ds && db.object_db == d_o && db.irrelevant_db == dir
}
