//! Micro/macro F1, head/torso/tail segmentation and bootstrap significance.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, input, Result};
use crate::par::{self, Exec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub micro_f1: f64,
    /// Unweighted mean over classes with at least one gold item.
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
}

/// Per-class precision/recall/F1 (0/0 taken as 0), pooled micro F1 and
/// macro F1 over classes that appear in `gold`.
pub fn compute_f1(predictions: &[usize], gold: &[usize], num_classes: usize) -> Result<F1Report> {
    if predictions.len() != gold.len() {
        return input(format!("{} predictions for {} gold labels", predictions.len(), gold.len()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    for (&p, &g) in predictions.iter().zip(gold) {
        if p >= num_classes || g >= num_classes {
            return input(format!("label outside {num_classes} classes"));
        }
        pred_count[p] += 1;
        support[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassScores> = (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassScores { precision, recall, f1, support: support[c] }
        })
        .collect();
    let supported: Vec<f64> = per_class.iter().filter(|c| c.support > 0).map(|c| c.f1).collect();
    let macro_f1 = if supported.is_empty() { 0.0 } else { supported.iter().sum::<f64>() / supported.len() as f64 };
    // single-label: pooled precision = pooled recall = accuracy
    let micro_f1 = ratio(tp.iter().sum(), gold.len());
    Ok(F1Report { micro_f1, macro_f1, per_class })
}

/// Macro F1 only, without allocating the per-class report.
pub fn macro_f1(predictions: &[usize], gold: &[usize], num_classes: usize) -> f64 {
    let mut tp = vec![0usize; num_classes];
    let mut pc = vec![0usize; num_classes];
    let mut sup = vec![0usize; num_classes];
    for (&p, &g) in predictions.iter().zip(gold) {
        pc[p] += 1;
        sup[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let mut total = 0.0;
    let mut n = 0;
    for c in 0..num_classes {
        if sup[c] == 0 {
            continue;
        }
        n += 1;
        if tp[c] > 0 {
            total += 2.0 * tp[c] as f64 / (pc[c] + sup[c]) as f64;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Head,
    Torso,
    Tail,
}

impl Segment {
    pub fn name(self) -> &'static str {
        match self {
            Segment::Head => "head",
            Segment::Torso => "torso",
            Segment::Tail => "tail",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentAssignment {
    pub segments: BTreeMap<String, Segment>,
    pub histogram: BTreeMap<String, u64>,
}

impl SegmentAssignment {
    pub fn members(&self, seg: Segment) -> Vec<&str> {
        self.segments.iter().filter(|(_, s)| **s == seg).map(|(n, _)| n.as_str()).collect()
    }

    /// `node\tsegment\tcount` rows, nodes ordered as ranked.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(&String, &u64)> = self.histogram.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::from("node\tsegment\tcount\n");
        for (node, count) in rows {
            out.push_str(&format!("{node}\t{}\t{count}\n", self.segments[node].name()));
        }
        out
    }
}

/// Ranks nodes by item count (descending, ties by node id) and cuts the
/// ranking where the cumulative share first reaches 70% (head) and then
/// 90% (torso); everything after is tail.
pub fn segment_head_torso_tail(histogram: &BTreeMap<String, u64>) -> Result<SegmentAssignment> {
    let total: u64 = histogram.values().sum();
    if total == 0 {
        return input("segmentation needs at least one item");
    }
    let mut ranked: Vec<(&String, &u64)> = histogram.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut segments = BTreeMap::new();
    let mut cum: u128 = 0;
    let total = total as u128;
    let mut current = Segment::Head;
    for (node, &count) in ranked {
        segments.insert(node.clone(), current);
        cum += count as u128;
        // integer comparison keeps the 70% / 90% boundaries exact
        if current == Segment::Head && cum * 10 >= total * 7 {
            current = Segment::Torso;
        }
        if current == Segment::Torso && cum * 10 >= total * 9 {
            current = Segment::Tail;
        }
    }
    Ok(SegmentAssignment { segments, histogram: histogram.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub significant: bool,
    /// Central interval of `macroF1(a) - macroF1(b)`.
    pub delta_interval: (f64, f64),
    pub observed_delta: f64,
    pub resamples: usize,
    pub ci: f64,
}

/// Paired bootstrap over items: resample indices with replacement, record
/// the macro-F1 difference of system `a` over `b`, and call the difference
/// significant when the central `ci` interval excludes zero.
pub fn bootstrap_compare(
    pred_a: &[usize],
    pred_b: &[usize],
    gold: &[usize],
    num_classes: usize,
    resamples: usize,
    ci: f64,
    seed: u64,
    exec: Exec,
) -> Result<BootstrapResult> {
    if pred_a.len() != gold.len() || pred_b.len() != gold.len() {
        return input("prediction and gold lengths differ");
    }
    if gold.is_empty() {
        return input("bootstrap over an empty evaluation set");
    }
    if resamples < 1000 {
        return config(format!("need at least 1000 resamples, got {resamples}"));
    }
    if !(ci > 0.0 && ci < 1.0) {
        return config(format!("confidence level {ci} outside (0, 1)"));
    }
    if pred_a.iter().chain(pred_b).chain(gold).any(|&c| c >= num_classes) {
        return input(format!("label outside {num_classes} classes"));
    }
    let n = gold.len();
    let mut deltas = par::map_range(exec, resamples, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            a.push(pred_a[i]);
            b.push(pred_b[i]);
            g.push(gold[i]);
        }
        macro_f1(&a, &g, num_classes) - macro_f1(&b, &g, num_classes)
    });
    deltas.sort_by(f64::total_cmp);
    let alpha = (1.0 - ci) / 2.0;
    let lo = quantile(&deltas, alpha);
    let hi = quantile(&deltas, 1.0 - alpha);
    Ok(BootstrapResult {
        significant: lo > 0.0 || hi < 0.0,
        delta_interval: (lo, hi),
        observed_delta: macro_f1(pred_a, gold, num_classes) - macro_f1(pred_b, gold, num_classes),
        resamples,
        ci,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}
