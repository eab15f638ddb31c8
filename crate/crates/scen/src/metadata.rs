//! Dataset metadata text file.
//!
//! ```text
//! [states]
//! wet
//! dry
//! [objects]
//! cat
//! [pairs]
//! wet cat seen
//! dry cat unseen
//! [images]
//! 0 wet cat train
//! 1 dry cat test
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Names may not
//! contain whitespace. Each images line names the feature row it describes;
//! every row must appear exactly once.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use scen_core::{CompositionLabel, DatasetBundle, Split};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub state_names: Vec<String>,
    pub object_names: Vec<String>,
    pub seen_pairs: BTreeSet<CompositionLabel>,
    pub unseen_pairs: BTreeSet<CompositionLabel>,
    /// Indexed by feature row.
    pub labels: Vec<CompositionLabel>,
    pub splits: Vec<Split>,
}

impl Metadata {
    pub fn of(bundle: &DatasetBundle) -> Self {
        Self {
            state_names: bundle.state_names().to_vec(),
            object_names: bundle.object_names().to_vec(),
            seen_pairs: bundle.seen_pairs().clone(),
            unseen_pairs: bundle.unseen_pairs().clone(),
            labels: bundle.labels().to_vec(),
            splits: bundle.splits().to_vec(),
        }
    }
}

pub fn render(meta: &Metadata) -> String {
    let mut s = String::new();
    s.push_str("[states]\n");
    for n in &meta.state_names {
        writeln!(s, "{n}").unwrap();
    }
    s.push_str("[objects]\n");
    for n in &meta.object_names {
        writeln!(s, "{n}").unwrap();
    }
    s.push_str("[pairs]\n");
    let pairs = meta.seen_pairs.iter().map(|p| (p, "seen")).chain(meta.unseen_pairs.iter().map(|p| (p, "unseen")));
    let mut pairs: Vec<_> = pairs.collect();
    pairs.sort();
    for (p, tag) in pairs {
        writeln!(s, "{} {} {tag}", meta.state_names[p.state], meta.object_names[p.object]).unwrap();
    }
    s.push_str("[images]\n");
    for (i, (l, sp)) in meta.labels.iter().zip(&meta.splits).enumerate() {
        writeln!(s, "{i} {} {} {}", meta.state_names[l.state], meta.object_names[l.object], sp.as_str()).unwrap();
    }
    s
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    States,
    Objects,
    Pairs,
    Images,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Metadata { line, msg: msg.into() }
}

fn lookup(table: &HashMap<String, usize>, name: &str, kind: &str, line: usize) -> Result<usize> {
    table
        .get(name)
        .copied()
        .ok_or_else(|| err(line, format!("unknown {kind} `{name}`")))
}

pub fn parse(text: &str) -> Result<Metadata> {
    let mut section = Section::None;
    let mut state_names = Vec::new();
    let mut object_names = Vec::new();
    let mut states = HashMap::new();
    let mut objects = HashMap::new();
    let mut seen_pairs = BTreeSet::new();
    let mut unseen_pairs = BTreeSet::new();
    let mut images: Vec<(usize, usize, CompositionLabel, Split)> = Vec::new();
    let mut seen_sections = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if t.starts_with('[') {
            section = match t {
                "[states]" => Section::States,
                "[objects]" => Section::Objects,
                "[pairs]" => Section::Pairs,
                "[images]" => Section::Images,
                other => return Err(err(line, format!("unknown section {other}"))),
            };
            if seen_sections.contains(&t) {
                return Err(err(line, format!("duplicate section {t}")));
            }
            seen_sections.push(t);
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match section {
            Section::None => return Err(err(line, "content before the first section header")),
            Section::States | Section::Objects => {
                if fields.len() != 1 {
                    return Err(err(line, "a vocabulary line holds exactly one name"));
                }
                let (names, table) = if section == Section::States {
                    (&mut state_names, &mut states)
                } else {
                    (&mut object_names, &mut objects)
                };
                if table.insert(fields[0].to_string(), names.len()).is_some() {
                    return Err(err(line, format!("duplicate name `{}`", fields[0])));
                }
                names.push(fields[0].to_string());
            }
            Section::Pairs => {
                let [s, o, tag] = fields[..] else {
                    return Err(err(line, "expected `state object seen|unseen`"));
                };
                let p = CompositionLabel::new(lookup(&states, s, "state", line)?, lookup(&objects, o, "object", line)?);
                if seen_pairs.contains(&p) || unseen_pairs.contains(&p) {
                    return Err(err(line, format!("pair `{s} {o}` listed twice")));
                }
                match tag {
                    "seen" => seen_pairs.insert(p),
                    "unseen" => unseen_pairs.insert(p),
                    _ => return Err(err(line, format!("pair tag must be seen or unseen, got `{tag}`"))),
                };
            }
            Section::Images => {
                let [row, s, o, split] = fields[..] else {
                    return Err(err(line, "expected `row state object train|val|test`"));
                };
                let row: usize = row.parse().map_err(|_| err(line, format!("bad row index `{row}`")))?;
                let p = CompositionLabel::new(lookup(&states, s, "state", line)?, lookup(&objects, o, "object", line)?);
                let split = Split::parse(split).ok_or_else(|| err(line, format!("split must be train, val or test, got `{split}`")))?;
                if !seen_pairs.contains(&p) && !unseen_pairs.contains(&p) {
                    return Err(err(line, format!("image label `{s} {o}` is not a listed pair")));
                }
                if split == Split::Train && !seen_pairs.contains(&p) {
                    return Err(err(line, format!("train image has unseen label `{s} {o}`")));
                }
                images.push((row, line, p, split));
            }
        }
    }

    let end = text.lines().count().max(1);
    for (want, name) in [("[states]", "states"), ("[objects]", "objects"), ("[pairs]", "pairs"), ("[images]", "images")] {
        if !seen_sections.contains(&want) {
            return Err(err(end, format!("missing section {name}")));
        }
    }
    let n = images.len();
    let mut labels = vec![None; n];
    for &(row, line, p, split) in &images {
        match labels.get_mut(row) {
            None => return Err(err(line, format!("row {row} out of range for {n} images"))),
            Some(Some(_)) => return Err(err(line, format!("row {row} listed twice"))),
            Some(slot) => *slot = Some((p, split)),
        }
    }
    let (labels, splits) = labels.into_iter().map(|x| x.expect("every row filled")).unzip();
    Ok(Metadata {
        state_names,
        object_names,
        seen_pairs,
        unseen_pairs,
        labels,
        splits,
    })
}
