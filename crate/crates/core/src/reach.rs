//! Item reachability for non-purchased items, with Dirichlet concentrations
//! fitted by Minka's fixed-point iteration.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::data::{path_label, ItemRecord};
use crate::error::{config, input, Error, Result};
use crate::eup::EupTable;
use crate::report::sig6;

pub const MLE_TOL: f64 = 1e-8;
pub const MLE_MAX_ITER: usize = 1000;
const CLAMP: f64 = 1e-6;

/// ψ'(x) for x > 0: recurrence up to x ≥ 10, then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // 1/x + 1/2x² + 1/6x³ - 1/30x⁵ + 1/42x⁷ - 1/30x⁹ + 5/66x¹¹
    let series = 1.0 / x
        + x2 / 2.0
        + (1.0 / x)
            * x2
            * (1.0 / 6.0 + x2 * (-1.0 / 30.0 + x2 * (1.0 / 42.0 + x2 * (-1.0 / 30.0 + x2 * 5.0 / 66.0))));
    acc + series
}

/// Solves ψ(x) = y by Newton's method from Minka's starting point.
pub fn inv_digamma(y: f64) -> f64 {
    let mut x = if y >= -2.22 { y.exp() + 0.5 } else { -1.0 / (y - digamma(1.0)) };
    for _ in 0..100 {
        let step = (digamma(x) - y) / trigamma(x);
        let next = x - step;
        // Newton from this start stays positive; guard anyway
        let next = if next > 0.0 { next } else { x / 2.0 };
        if (next - x).abs() <= 1e-15 * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Maximum-likelihood Dirichlet concentrations for probability vectors.
/// Entries must lie strictly inside (0, 1).
pub fn dirichlet_mle(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return input("Dirichlet fit needs at least two samples");
    }
    let k = samples[0].len();
    if k < 2 {
        return input("Dirichlet fit needs at least two components");
    }
    let n = samples.len() as f64;
    let mut mean_log = vec![0.0; k];
    let mut mean = vec![0.0; k];
    let mut mean_sq = vec![0.0; k];
    for s in samples {
        if s.len() != k {
            return input("samples differ in length");
        }
        for (j, &p) in s.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return input(format!("sample entry {p} outside (0, 1); smooth before fitting"));
            }
            mean_log[j] += p.ln() / n;
            mean[j] += p / n;
            mean_sq[j] += p * p / n;
        }
    }
    // moment-matched starting precision, averaged over components
    let mut precision = 0.0;
    for j in 0..k {
        precision += (mean[j] - mean_sq[j]) / (mean_sq[j] - mean[j] * mean[j]);
    }
    precision /= k as f64;
    if !(precision.is_finite() && precision > 0.0) {
        precision = k as f64;
    }
    let mut alpha: Vec<f64> = mean.iter().map(|m| m * precision).collect();
    for _ in 0..MLE_MAX_ITER {
        let psi_sum = digamma(alpha.iter().sum());
        let next: Vec<f64> = mean_log.iter().map(|&l| inv_digamma(psi_sum + l)).collect();
        if next.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::NonConvergence { iterations: MLE_MAX_ITER, last: alpha });
        }
        let change = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        alpha = next;
        if change < MLE_TOL {
            return Ok(alpha);
        }
    }
    Err(Error::NonConvergence { iterations: MLE_MAX_ITER, last: alpha })
}

/// Maximum-likelihood child proportions from item counts. When any child
/// has no items every count gets one added.
pub fn estimate_theta(counts: &[u64]) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return input("node has no items");
    }
    let smooth = if counts.contains(&0) { 1 } else { 0 };
    let total = (total + smooth * counts.len() as u64) as f64;
    Ok(counts.iter().map(|&c| (c + smooth) as f64 / total).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaConfig {
    /// Mass on the labelled child for purchased or carted items.
    pub purchased: f64,
    /// Mass on the labelled child otherwise; the rest models label noise.
    pub other: f64,
}

impl Default for EtaConfig {
    fn default() -> Self {
        EtaConfig { purchased: 0.95, other: 0.8 }
    }
}

/// Pseudo-observation over `siblings` children with child `k` labelled.
/// The leftover mass goes to the other children: a flat-Dirichlet split for
/// purchased items, normalised uniform draws otherwise. With one child the
/// result is `[1.0]`.
pub fn build_eta<R: Rng + ?Sized>(k: usize, siblings: usize, purchased: bool, cfg: &EtaConfig, rng: &mut R) -> Vec<f64> {
    assert!(k < siblings, "child index {k} out of {siblings}");
    if siblings == 1 {
        return vec![1.0];
    }
    let main = if purchased { cfg.purchased } else { cfg.other };
    let raw: Vec<f64> = (0..siblings - 1)
        .map(|_| if purchased { Exp1.sample(rng) } else { rng.random::<f64>() })
        .collect();
    let total: f64 = raw.iter().sum();
    let rest = 1.0 - main;
    let mut others = raw.iter().map(|r| if total > 0.0 { r / total * rest } else { rest / (siblings - 1) as f64 });
    (0..siblings).map(|z| if z == k { main } else { others.next().unwrap() }).collect()
}

/// Clamps into `[1e-6, 1 - 1e-6]` and renormalises.
pub fn smooth_simplex(p: &[f64]) -> Vec<f64> {
    let c: Vec<f64> = p.iter().map(|x| x.clamp(CLAMP, 1.0 - CLAMP)).collect();
    let s: f64 = c.iter().sum();
    c.iter().map(|x| x / s).collect()
}

/// Child list, proportions and concentrations for one internal node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeProportions {
    pub children: Vec<String>,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl NodeProportions {
    pub fn child_index(&self, child: &str) -> Option<usize> {
        self.children.iter().position(|c| c == child)
    }
}

/// Node path (joined with `" > "`) to its fitted proportions.
pub type Proportions = BTreeMap<String, NodeProportions>;

/// Fits θ and α for every level-`level` node that has children in the
/// training items. Items shallower than `level + 1` are ignored. Single
/// child nodes get α = [1].
pub fn fit_proportions<R: Rng + ?Sized>(
    items: &[ItemRecord],
    level: usize,
    eta: &EtaConfig,
    rng: &mut R,
) -> Result<Proportions> {
    if level == 0 {
        return config("reachability level must be at least 1");
    }
    let mut nodes: BTreeMap<String, BTreeMap<String, Vec<&ItemRecord>>> = BTreeMap::new();
    for it in items.iter().filter(|it| it.genre_path.len() > level) {
        nodes
            .entry(path_label(&it.genre_path, Some(level)))
            .or_default()
            .entry(it.genre_path[level].clone())
            .or_default()
            .push(it);
    }
    let mut out = Proportions::new();
    for (node, children) in nodes {
        let names: Vec<String> = children.keys().cloned().collect();
        let counts: Vec<u64> = children.values().map(|v| v.len() as u64).collect();
        let theta = estimate_theta(&counts)?;
        let alpha = if names.len() == 1 {
            vec![1.0]
        } else {
            let mut samples = Vec::new();
            for (k, members) in children.values().enumerate() {
                for it in members {
                    samples.push(smooth_simplex(&build_eta(k, names.len(), it.purchased_or_carted(), eta, rng)));
                }
            }
            dirichlet_mle(&samples).map_err(|e| match e {
                Error::NonConvergence { .. } => e,
                other => Error::Input(format!("node {node}: {other}")),
            })?
        };
        out.insert(node, NodeProportions { children: names, theta, alpha });
    }
    Ok(out)
}

/// A held-out item with its provided path and the classifier's path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachItem {
    pub id: String,
    pub provided: Vec<String>,
    pub predicted: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityReport {
    pub level: usize,
    /// Child path to `(item id, score)` in item-id order.
    pub scores: BTreeMap<String, Vec<(String, f64)>>,
    /// Items skipped because their level-`level` genre has no EuP score.
    pub skipped: usize,
}

impl ReachabilityReport {
    pub fn node_means(&self) -> BTreeMap<String, f64> {
        self.scores
            .iter()
            .map(|(c, v)| (c.clone(), v.iter().map(|(_, s)| s).sum::<f64>() / v.len() as f64))
            .collect()
    }

    /// Mean over every scored item.
    pub fn overall_mean(&self) -> f64 {
        let all: Vec<f64> = self.scores.values().flatten().map(|(_, s)| *s).collect();
        if all.is_empty() {
            0.0
        } else {
            all.iter().sum::<f64>() / all.len() as f64
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("child_path\tmean_score\tcount\n");
        let means = self.node_means();
        for (c, v) in &self.scores {
            out.push_str(&format!("{c}\t{}\t{}\n", sig6(means[c]), v.len()));
        }
        out
    }
}

/// Score per item: `1[pred_l = provided_l] · EuP̂(provided_l) · θ_c · θ_c^(α_c − 1)`
/// where `c` is the provided child below the level-`level` node and EuP̂
/// is the EuP score normalised over sibling genres.
pub fn item_reachability(
    heldout: &[ReachItem],
    eup: &EupTable,
    proportions: &Proportions,
    level: usize,
) -> Result<ReachabilityReport> {
    let eup_hat = eup.sibling_normalized();
    let mut order: Vec<&ReachItem> = heldout.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut report = ReachabilityReport { level, ..Default::default() };
    for it in order {
        if it.provided.len() <= level {
            return input(format!("item {} has no level-{} child", it.id, level + 1));
        }
        let node = path_label(&it.provided, Some(level));
        let Some(e) = eup_hat.get(&node) else {
            report.skipped += 1;
            continue;
        };
        let props = proportions.get(&node).ok_or_else(|| Error::Config(format!("no proportions for node {node}")))?;
        let child = &it.provided[level];
        let c = props
            .child_index(child)
            .ok_or_else(|| Error::Config(format!("no proportions for child {child} of {node}")))?;
        let correct = it.predicted.len() >= level && path_label(&it.predicted, Some(level)) == node;
        let f_g = if correct { *e } else { 0.0 };
        let theta = props.theta[c];
        let score = f_g * theta * theta.powf(props.alpha[c] - 1.0);
        report.scores.entry(path_label(&it.provided, Some(level + 1))).or_default().push((it.id.clone(), score));
    }
    Ok(report)
}

/// Mean reachability per classifier at two levels, as percentages, with the
/// gain from the deeper level.
pub fn comparison_table(rows: &[(String, &ReachabilityReport, &ReachabilityReport)]) -> String {
    let (a, b) = rows.first().map_or((0, 0), |(_, x, y)| (x.level, y.level));
    let mut out = format!("classifier\tR{a}\tR{b}\tR{b}-R{a}\n");
    for (name, x, y) in rows {
        let (rx, ry) = (100.0 * x.overall_mean(), 100.0 * y.overall_mean());
        out.push_str(&format!("{name}\t{}%\t{}%\t{}%\n", sig6(rx), sig6(ry), sig6(ry - rx)));
    }
    out
}
