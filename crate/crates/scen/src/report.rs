//! Text outputs: CSV logs and curves, JSON reports, console tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use scen_core::data::SplitStats;
use scen_core::eval::{CurvePoint, EvalReport};
use scen_core::train::EpochLog;

pub const LOG_HEADER: &str = "epoch,L_cls,L_scl,L_ocl,L_D,L_G_adv,L_cls_re,val_auc";
pub const CURVE_HEADER: &str = "bias,seen_acc,unseen_acc";

/// The six scalars of an [`EvalReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub auc: f64,
    pub best_hm: f64,
    pub best_seen: f64,
    pub best_unseen: f64,
    pub state_acc: f64,
    pub object_acc: f64,
}

impl From<&EvalReport> for ReportSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            auc: r.auc,
            best_hm: r.best_hm,
            best_seen: r.best_seen,
            best_unseen: r.best_unseen,
            state_acc: r.state_acc,
            object_acc: r.object_acc,
        }
    }
}

pub fn report_json(r: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(&ReportSummary::from(r)).expect("plain struct");
    s.push('\n');
    s
}

fn bias_str(b: f64) -> String {
    if b == f64::INFINITY {
        "inf".into()
    } else if b == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        b.to_string()
    }
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in curve {
        writeln!(s, "{},{},{}", bias_str(p.bias), p.seen_acc, p.unseen_acc).unwrap();
    }
    s
}

pub fn parse_curve_csv(text: &str) -> Option<Vec<CurvePoint>> {
    let mut lines = text.lines();
    if lines.next()? != CURVE_HEADER {
        return None;
    }
    lines
        .map(|l| {
            let mut f = l.split(',');
            let bias = match f.next()? {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                v => v.parse().ok()?,
            };
            Some(CurvePoint {
                bias,
                seen_acc: f.next()?.parse().ok()?,
                unseen_acc: f.next()?.parse().ok()?,
            })
        })
        .collect()
}

pub fn log_line(l: &EpochLog) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        l.epoch, l.l_cls, l.l_scl, l.l_ocl, l.l_d, l.l_g_adv, l.l_cls_re, l.val_auc
    )
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for l in log {
        s.push_str(&log_line(l));
        s.push('\n');
    }
    s
}

pub const RESULT_HEADER: &str = "Seen  Unseen      HM     AUC       s       o";

/// Percentages in the column order of [`RESULT_HEADER`].
pub fn result_row(r: &ReportSummary) -> String {
    format!(
        "{:>4.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1}",
        100.0 * r.best_seen,
        100.0 * r.best_unseen,
        100.0 * r.best_hm,
        100.0 * r.auc,
        100.0 * r.state_acc,
        100.0 * r.object_acc
    )
}

pub fn split_table(name: &str, s: &SplitStats) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>4} {:>4} | {:>5} {:>6} | {:>5} {:>5} {:>6} | {:>5} {:>5} {:>6}",
        "Dataset", "|A|", "|O|", "Tr Sp", "Tr I", "Va Sp", "Va Up", "Va I", "Te Sp", "Te Up", "Te I"
    )
    .unwrap();
    writeln!(
        out,
        "{:<12} {:>4} {:>4} | {:>5} {:>6} | {:>5} {:>5} {:>6} | {:>5} {:>5} {:>6}",
        name,
        s.n_states,
        s.n_objects,
        s.train.seen_pairs,
        s.train.images,
        s.val.seen_pairs,
        s.val.unseen_pairs,
        s.val.images,
        s.test.seen_pairs,
        s.test.unseen_pairs,
        s.test.images
    )
    .unwrap();
    out
}

/// Metrics of one variant and seed in an ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationEntry {
    pub val_auc: f64,
    pub test: ReportSummary,
}

pub const ABLATION_COLUMNS: [&str; 7] = ["val_auc", "test_auc", "hm", "seen", "unseen", "state", "object"];

impl AblationEntry {
    pub fn metrics(&self) -> [f64; 7] {
        let t = &self.test;
        [self.val_auc, t.auc, t.best_hm, t.best_seen, t.best_unseen, t.state_acc, t.object_acc]
    }
}

pub fn mean_metrics(entries: &[AblationEntry]) -> [f64; 7] {
    let mut m = [0.0; 7];
    for e in entries {
        for (a, b) in m.iter_mut().zip(e.metrics()) {
            *a += b;
        }
    }
    m.map(|v| v / entries.len() as f64)
}

/// One row per variant with the across-seed mean of each metric.
pub fn ablation_csv(rows: &[(&str, Vec<AblationEntry>)]) -> String {
    let mut s = format!("variant,{}\n", ABLATION_COLUMNS.join(","));
    for (name, entries) in rows {
        let m = mean_metrics(entries);
        let cells: Vec<String> = m.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{name},{}", cells.join(",")).unwrap();
    }
    s
}

/// One row per variant and seed.
pub fn ablation_seeds_csv(rows: &[(&str, Vec<AblationEntry>)], seeds: &[u64]) -> String {
    let mut s = format!("variant,seed,{}\n", ABLATION_COLUMNS.join(","));
    for (name, entries) in rows {
        for (e, seed) in entries.iter().zip(seeds) {
            let cells: Vec<String> = e.metrics().iter().map(|v| v.to_string()).collect();
            writeln!(s, "{name},{seed},{}", cells.join(",")).unwrap();
        }
    }
    s
}
