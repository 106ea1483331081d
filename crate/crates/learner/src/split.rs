//! Gradient histograms and the best-split search over them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{BinnedData, FeatureMeta, MISSING_BIN};
use crate::objective::{Gradients, N_CLASSES};

/// Summed gradient statistics of a set of rows, for up to five outputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeStats {
    pub g: [f64; N_CLASSES],
    pub h: [f64; N_CLASSES],
    pub count: usize,
}

impl NodeStats {
    pub fn of_rows(rows: &[u32], grads: &Gradients) -> Self {
        let m = grads.n_outputs;
        let mut s = NodeStats::default();
        for &r in rows {
            let base = r as usize * m;
            for k in 0..m {
                s.g[k] += grads.g[base + k];
                s.h[k] += grads.h[base + k];
            }
        }
        s.count = rows.len();
        s
    }

    fn add(&mut self, other: &NodeStats, m: usize) {
        for k in 0..m {
            self.g[k] += other.g[k];
            self.h[k] += other.h[k];
        }
        self.count += other.count;
    }

    fn minus(&self, other: &NodeStats, m: usize) -> NodeStats {
        let mut out = *self;
        for k in 0..m {
            out.g[k] -= other.g[k];
            out.h[k] -= other.h[k];
        }
        out.count -= other.count;
        out
    }

    /// `sum_k G_k^2 / (H_k + lambda)`, the (negated, doubled) optimal
    /// objective of a leaf holding these rows.
    pub fn score(&self, m: usize, lambda: f64) -> f64 {
        (0..m).map(|k| leaf_term(self.g[k], self.h[k], lambda)).sum()
    }
}

fn leaf_term(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

pub fn split_gain(left: &NodeStats, right: &NodeStats, parent: &NodeStats, m: usize, lambda: f64) -> f64 {
    left.score(m, lambda) + right.score(m, lambda) - parent.score(m, lambda)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    /// Value bins `<= threshold` go left.
    Threshold(u8),
    /// The listed category bins go left; every other value bin goes right.
    Categories(Vec<u8>),
}

impl SplitRule {
    pub fn goes_left(&self, bin: u8, missing_left: bool) -> bool {
        if bin == MISSING_BIN {
            return missing_left;
        }
        match self {
            SplitRule::Threshold(t) => bin <= *t,
            SplitRule::Categories(left) => left.binary_search(&bin).is_ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub rule: SplitRule,
    /// Position in the scan order: the bin for threshold rules, the prefix
    /// length minus one for category rules.
    pub threshold: usize,
    pub missing_left: bool,
    pub gain: f64,
    pub left: NodeStats,
    pub right: NodeStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub lambda: f64,
    pub min_samples_leaf: usize,
}

/// Per-bin statistics of one feature; the last slot is the missing bin.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureHist {
    pub stats: Vec<NodeStats>,
}

impl FeatureHist {
    fn build(column: &[u8], meta: FeatureMeta, rows: &[u32], grads: &Gradients) -> Self {
        let m = grads.n_outputs;
        let nb = meta.n_value_bins;
        let mut stats = vec![NodeStats::default(); nb + 1];
        for &r in rows {
            let b = column[r as usize];
            let slot = if b == MISSING_BIN { nb } else { b as usize };
            let s = &mut stats[slot];
            let base = r as usize * m;
            for k in 0..m {
                s.g[k] += grads.g[base + k];
                s.h[k] += grads.h[base + k];
            }
            s.count += 1;
        }
        Self { stats }
    }

    pub fn missing(&self) -> &NodeStats {
        self.stats.last().expect("histogram has a missing slot")
    }

    pub fn value_bins(&self) -> &[NodeStats] {
        &self.stats[..self.stats.len() - 1]
    }
}

/// Histograms of every feature for one node. Features outside the sampled
/// set are left empty.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeHist {
    pub features: Vec<FeatureHist>,
}

impl NodeHist {
    pub fn build(data: &BinnedData, rows: &[u32], grads: &Gradients, features: &[usize]) -> Self {
        let built: Vec<(usize, FeatureHist)> = features
            .par_iter()
            .map(|&f| (f, FeatureHist::build(data.column(f), data.meta(f), rows, grads)))
            .collect();
        let mut hists = vec![FeatureHist::default(); data.n_features()];
        for (f, h) in built {
            hists[f] = h;
        }
        Self { features: hists }
    }

    /// Parent minus sibling, for the sampled features.
    pub fn subtract(&self, sibling: &NodeHist, features: &[usize], m: usize) -> NodeHist {
        let mut out = vec![FeatureHist::default(); self.features.len()];
        for &f in features {
            out[f] = FeatureHist {
                stats: self.features[f]
                    .stats
                    .iter()
                    .zip(&sibling.features[f].stats)
                    .map(|(p, s)| p.minus(s, m))
                    .collect(),
            };
        }
        NodeHist { features: out }
    }
}

/// Scan order of value bins. Threshold features scan bins in natural order;
/// category features scan the non-empty categories sorted by gradient ratio
/// (single output) or by mean residual ordinal (multi-output), ties by bin.
pub fn scan_order(hist: &FeatureHist, meta: FeatureMeta, m: usize, lambda: f64) -> Vec<usize> {
    let bins = hist.value_bins();
    if !meta.categorical {
        return (0..bins.len()).collect();
    }
    let key = |s: &NodeStats| -> f64 {
        if m == 1 {
            let d = s.h[0] + lambda;
            if d > 0.0 {
                s.g[0] / d
            } else {
                0.0
            }
        } else {
            (0..m).map(|k| k as f64 * s.g[k]).sum::<f64>() / s.count as f64
        }
    };
    let mut order: Vec<(f64, usize)> = bins
        .iter()
        .enumerate()
        .filter(|(_, s)| s.count > 0)
        .map(|(b, s)| (key(s), b))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().map(|(_, b)| b).collect()
}

pub fn rule_for(meta: FeatureMeta, order: &[usize], threshold: usize) -> SplitRule {
    if meta.categorical {
        let mut left: Vec<u8> = order[..=threshold].iter().map(|&b| b as u8).collect();
        left.sort_unstable();
        SplitRule::Categories(left)
    } else {
        SplitRule::Threshold(order[threshold] as u8)
    }
}

/// Every `(threshold, missing_left, left, right)` of one feature, in scan
/// order with the missing-left variant first.
pub fn for_each_partition(
    hist: &FeatureHist,
    order: &[usize],
    total: &NodeStats,
    m: usize,
    mut visit: impl FnMut(usize, bool, &NodeStats, &NodeStats),
) {
    let missing = hist.missing();
    let mut prefix = NodeStats::default();
    for (t, &b) in order.iter().enumerate() {
        prefix.add(&hist.value_bins()[b], m);
        for missing_left in [true, false] {
            let mut left = prefix;
            if missing_left {
                left.add(missing, m);
            }
            let right = total.minus(&left, m);
            visit(t, missing_left, &left, &right);
        }
    }
}

/// Best positive-gain split of a node from its histograms. Ties keep the
/// lowest feature, then the lowest threshold, then missing-left.
pub fn best_split_from_hist(
    hist: &NodeHist,
    data: &BinnedData,
    total: &NodeStats,
    features: &[usize],
    m: usize,
    params: &SplitParams,
) -> Option<SplitCandidate> {
    if total.count < 2 * params.min_samples_leaf {
        return None;
    }
    let per_feature: Vec<Option<SplitCandidate>> = features
        .par_iter()
        .map(|&f| best_for_feature(&hist.features[f], data.meta(f), f, total, m, params))
        .collect();
    let mut best: Option<SplitCandidate> = None;
    let mut order: Vec<&SplitCandidate> = per_feature.iter().flatten().collect();
    order.sort_by_key(|c| c.feature);
    for c in order {
        if best.as_ref().is_none_or(|b| c.gain > b.gain) {
            best = Some(c.clone());
        }
    }
    best
}

fn best_for_feature(
    hist: &FeatureHist,
    meta: FeatureMeta,
    feature: usize,
    total: &NodeStats,
    m: usize,
    params: &SplitParams,
) -> Option<SplitCandidate> {
    let order = scan_order(hist, meta, m, params.lambda);
    let mut best: Option<(usize, bool, f64, NodeStats, NodeStats)> = None;
    for_each_partition(hist, &order, total, m, |t, missing_left, left, right| {
        if left.count < params.min_samples_leaf || right.count < params.min_samples_leaf {
            return;
        }
        let gain = split_gain(left, right, total, m, params.lambda);
        if gain > 0.0 && gain.is_finite() && best.as_ref().is_none_or(|b| gain > b.2) {
            best = Some((t, missing_left, gain, *left, *right));
        }
    });
    best.map(|(threshold, missing_left, gain, left, right)| SplitCandidate {
        feature,
        rule: rule_for(meta, &order, threshold),
        threshold,
        missing_left,
        gain,
        left,
        right,
    })
}

/// Builds the node histograms and returns the best split of `rows`.
pub fn find_best_split(
    data: &BinnedData,
    rows: &[u32],
    grads: &Gradients,
    features: &[usize],
    params: &SplitParams,
) -> Option<SplitCandidate> {
    let hist = NodeHist::build(data, rows, grads, features);
    let total = NodeStats::of_rows(rows, grads);
    best_split_from_hist(&hist, data, &total, features, grads.n_outputs, params)
}

/// Rows of `rows` sent left and right by a split, order preserved.
pub fn partition(data: &BinnedData, rows: &[u32], feature: usize, rule: &SplitRule, missing_left: bool) -> (Vec<u32>, Vec<u32>) {
    let column = data.column(feature);
    rows.iter().partition(|&&r| rule.goes_left(column[r as usize], missing_left))
}
