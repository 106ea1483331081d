//! Softmax cross-entropy and its per-class first and second derivatives.

use rayon::prelude::*;

pub const N_CLASSES: usize = triage_core::UrgencyLevel::COUNT;

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Gradient and diagonal hessian for every row, laid out `[row * k + class]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub n_outputs: usize,
}

impl Gradients {
    pub fn n_rows(&self) -> usize {
        self.g.len() / self.n_outputs
    }

    /// The single-output view of one class.
    pub fn class(&self, k: usize) -> Gradients {
        let n = self.n_rows();
        Gradients {
            g: (0..n).map(|r| self.g[r * self.n_outputs + k]).collect(),
            h: (0..n).map(|r| self.h[r * self.n_outputs + k]).collect(),
            n_outputs: 1,
        }
    }
}

/// `g_k = p_k - [label = k]`, `h_k = p_k (1 - p_k)` with `p = softmax(scores)`;
/// `scores` is row-major with `n_classes` entries per row.
pub fn compute_gradients(labels: &[u8], scores: &[f64], n_classes: usize) -> Gradients {
    assert_eq!(labels.len() * n_classes, scores.len());
    let mut g = vec![0.0; scores.len()];
    let mut h = vec![0.0; scores.len()];
    g.par_chunks_mut(n_classes)
        .zip(h.par_chunks_mut(n_classes))
        .zip(scores.par_chunks(n_classes))
        .zip(labels.par_iter())
        .for_each(|(((g, h), s), &label)| {
            let p = softmax(s);
            for k in 0..n_classes {
                let y = if label as usize == k { 1.0 } else { 0.0 };
                g[k] = p[k] - y;
                h[k] = p[k] * (1.0 - p[k]);
            }
        });
    Gradients {
        g,
        h,
        n_outputs: n_classes,
    }
}

/// Mean negative log-likelihood of the labels.
pub fn cross_entropy(labels: &[u8], scores: &[f64], n_classes: usize) -> f64 {
    let total: f64 = scores
        .par_chunks(n_classes)
        .zip(labels.par_iter())
        .map(|(s, &label)| {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = s.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            log_sum - s[label as usize]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scores() {
        let grads = compute_gradients(&[2], &[0.0; 5], 5);
        let expect_g = [0.2, 0.2, -0.8, 0.2, 0.2];
        for k in 0..5 {
            assert!((grads.g[k] - expect_g[k]).abs() < 1e-12);
            assert!((grads.h[k] - 0.16).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_true_class() {
        let mut scores = [0.0; 5];
        scores[3] = 30.0;
        let grads = compute_gradients(&[3], &scores, 5);
        assert!(grads.g.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn softmax_sums_to_one_for_large_scores() {
        let p = softmax(&[1000.0, -1000.0, 3.0, 999.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
