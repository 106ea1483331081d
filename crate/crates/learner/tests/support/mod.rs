//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triage_learner::binning::{BinnedData, FeatureMeta, MISSING_BIN};
use triage_learner::objective::Gradients;
use triage_learner::split::SplitParams;

pub struct Fixture {
    pub data: BinnedData,
    pub columns: Vec<Vec<u8>>,
    pub meta: Vec<FeatureMeta>,
    pub grads: Gradients,
    pub rows: Vec<u32>,
    pub params: SplitParams,
}

/// Random binned matrix (≤ 200 rows × ≤ 8 features) with injected missing
/// values and random single-output gradients.
pub fn random_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_rows = rng.random_range(20..=200);
    let n_features = rng.random_range(1..=8);
    let missing_rate = [0.0, 0.1, 0.3, 0.6][rng.random_range(0..4)];
    let mut columns = Vec::new();
    let mut meta = Vec::new();
    for _ in 0..n_features {
        let (n_value_bins, categorical) = match rng.random_range(0..3) {
            0 => (rng.random_range(2..=24), false),
            1 => (2, false),
            _ => (rng.random_range(2..=9), true),
        };
        let col: Vec<u8> = (0..n_rows)
            .map(|_| {
                if rng.random::<f64>() < missing_rate {
                    MISSING_BIN
                } else {
                    rng.random_range(0..n_value_bins) as u8
                }
            })
            .collect();
        columns.push(col);
        meta.push(FeatureMeta {
            n_value_bins,
            categorical,
        });
    }
    let g: Vec<f64> = (0..n_rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..n_rows).map(|_| rng.random_range(0.05..1.0)).collect();
    // Some fixtures look at a subset of rows, as a child node would.
    let rows: Vec<u32> = (0..n_rows as u32).filter(|_| rng.random::<f64>() < 0.85).collect();
    let params = SplitParams {
        lambda: [0.0, 0.5, 1.0, 3.0][rng.random_range(0..4)],
        min_samples_leaf: rng.random_range(1..=6),
    };
    Fixture {
        data: BinnedData::new(n_rows, columns.clone(), meta.clone()),
        columns,
        meta,
        grads: Gradients { g, h, n_outputs: 1 },
        rows,
        params,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSplit {
    pub feature: usize,
    pub threshold: usize,
    pub missing_left: bool,
    pub gain: f64,
    /// Value bins that go left.
    pub left_bins: Vec<u8>,
}

fn term(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda > 0.0 {
        g * g / (h + lambda)
    } else {
        0.0
    }
}

/// Exhaustive enumeration of every (feature, threshold, missing side),
/// computing each partition's sums straight from the rows.
pub fn brute_force_split(f: &Fixture) -> Option<OracleSplit> {
    let FixtureView { columns, meta, g, h, rows } = f.view();
    let lambda = f.params.lambda;
    let msl = f.params.min_samples_leaf;
    if rows.len() < 2 * msl {
        return None;
    }
    let (gt, ht): (f64, f64) = rows.iter().fold((0.0, 0.0), |a, &r| (a.0 + g[r as usize], a.1 + h[r as usize]));
    let mut best: Option<OracleSplit> = None;
    for (feature, col) in columns.iter().enumerate() {
        let m = meta[feature];
        let order: Vec<u8> = if m.categorical {
            let mut cats: Vec<(f64, u8)> = Vec::new();
            for b in 0..m.n_value_bins as u8 {
                let members: Vec<u32> = rows.iter().copied().filter(|&r| col[r as usize] == b).collect();
                if members.is_empty() {
                    continue;
                }
                let gs: f64 = members.iter().map(|&r| g[r as usize]).sum();
                let hs: f64 = members.iter().map(|&r| h[r as usize]).sum();
                let ratio = if hs + lambda > 0.0 { gs / (hs + lambda) } else { 0.0 };
                cats.push((ratio, b));
            }
            cats.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cats.into_iter().map(|c| c.1).collect()
        } else {
            (0..m.n_value_bins as u8).collect()
        };
        for t in 0..order.len() {
            let left_bins: Vec<u8> = order[..=t].to_vec();
            for missing_left in [true, false] {
                let goes_left = |b: u8| if b == MISSING_BIN { missing_left } else { left_bins.contains(&b) };
                let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
                let (mut gr, mut hr, mut nr) = (0.0, 0.0, 0usize);
                for &r in rows {
                    if goes_left(col[r as usize]) {
                        gl += g[r as usize];
                        hl += h[r as usize];
                        nl += 1;
                    } else {
                        gr += g[r as usize];
                        hr += h[r as usize];
                        nr += 1;
                    }
                }
                if nl < msl || nr < msl {
                    continue;
                }
                let gain = term(gl, hl, lambda) + term(gr, hr, lambda) - term(gt, ht, lambda);
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut sorted = left_bins.clone();
                    sorted.sort_unstable();
                    best = Some(OracleSplit {
                        feature,
                        threshold: t,
                        missing_left,
                        gain,
                        left_bins: sorted,
                    });
                }
            }
        }
    }
    best
}

pub struct FixtureView<'a> {
    pub columns: &'a [Vec<u8>],
    pub meta: &'a [FeatureMeta],
    pub g: &'a [f64],
    pub h: &'a [f64],
    pub rows: &'a [u32],
}

impl Fixture {
    pub fn view(&self) -> FixtureView<'_> {
        FixtureView {
            columns: &self.columns,
            meta: &self.meta,
            g: &self.grads.g,
            h: &self.grads.h,
            rows: &self.rows,
        }
    }
}

/// Softmax cross-entropy of one row, written out directly.
pub fn row_loss(scores: &[f64], label: usize) -> f64 {
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    -(scores[label].exp() / z).ln()
}

/// Five-point central finite differences of [`row_loss`]: first derivative
/// and the diagonal second derivative per class. The second derivative uses a
/// 10x wider step to keep cancellation error down.
pub fn finite_difference(scores: &[f64], label: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let at = |k: usize, offset: f64| {
        let mut s = scores.to_vec();
        s[k] += offset;
        row_loss(&s, label)
    };
    let f0 = row_loss(scores, label);
    let mut g = Vec::new();
    let mut h = Vec::new();
    for k in 0..scores.len() {
        let (p1, m1, p2, m2) = (at(k, eps), at(k, -eps), at(k, 2.0 * eps), at(k, -2.0 * eps));
        g.push((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps));
        let e = 10.0 * eps;
        let (p1, m1, p2, m2) = (at(k, e), at(k, -e), at(k, 2.0 * e), at(k, -2.0 * e));
        h.push((-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * e * e));
    }
    (g, h)
}
