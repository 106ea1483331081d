use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use triage_core::dataset::{EncodedDataset, EncodingMode, FeatureSchema, SparseRow};
use triage_core::UrgencyLevel;

use crate::binning::{build_bins, BinnedData, Binning};
use crate::config::{GbdtConfig, Strategy};
use crate::objective::{compute_gradients, cross_entropy, softmax, N_CLASSES};
use crate::split::SplitParams;
use crate::tree::{grow_tree, GrowParams, LeafValue, Tree};
use crate::LearnerError;

pub const FORMAT_VERSION: u32 = 1;

/// Class priors below this are clamped before taking the log.
const MIN_PRIOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub rows: usize,
    pub seed: u64,
    /// Wall-clock training time. Left out of artifacts unless asked for,
    /// since it would make otherwise identical artifacts differ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub format_version: u32,
    pub config: GbdtConfig,
    pub schema_fingerprint: String,
    pub schema: FeatureSchema,
    pub binning: Binning,
    pub base_scores: Vec<f64>,
    pub learning_rate: f64,
    /// Boosting: one tree per class per round. Forest: one multi-output
    /// tree per entry.
    pub trees: Vec<Vec<Tree>>,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: [f64; N_CLASSES],
    pub level: UrgencyLevel,
}

impl Prediction {
    /// Argmax; exact ties go to the more urgent level.
    pub fn from_probabilities(probabilities: [f64; N_CLASSES]) -> Self {
        let mut best = 0;
        for k in 1..N_CLASSES {
            if probabilities[k] >= probabilities[best] {
                best = k;
            }
        }
        Self {
            probabilities,
            level: UrgencyLevel::from_ordinal(best as u8).expect("class index is a level"),
        }
    }
}

fn class_priors(labels: &[u8]) -> [f64; N_CLASSES] {
    let mut counts = [0usize; N_CLASSES];
    for &l in labels {
        counts[l as usize] += 1;
    }
    counts.map(|c| c as f64 / labels.len() as f64)
}

fn features_for(rng: &mut ChaCha8Rng, n_features: usize, fraction: f64) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..n_features).collect();
    }
    let k = ((n_features as f64 * fraction).ceil() as usize).clamp(1, n_features.max(1));
    let mut chosen = sample(rng, n_features, k.min(n_features)).into_vec();
    chosen.sort_unstable();
    chosen
}

pub fn train(config: &GbdtConfig, dataset: &EncodedDataset) -> Result<Ensemble, LearnerError> {
    train_traced(config, dataset).map(|(e, _)| e)
}

/// Trains and also returns the training cross-entropy after each boosting
/// round (empty for forests).
pub fn train_traced(config: &GbdtConfig, dataset: &EncodedDataset) -> Result<(Ensemble, Vec<f64>), LearnerError> {
    config.validate()?;
    let started = Instant::now();
    let labels = &dataset.labels;
    if labels.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    let priors = class_priors(labels);
    if priors.iter().filter(|&&p| p > 0.0).count() < 2 {
        return Err(LearnerError::SingleLabel);
    }
    let binning = build_bins(dataset, config.n_bins);
    let data = binning.bin_dataset(dataset);
    let base_scores: Vec<f64> = priors.iter().map(|p| p.max(MIN_PRIOR).ln()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let split = SplitParams {
        lambda: config.l2_lambda,
        min_samples_leaf: config.min_samples_leaf,
    };
    let (trees, trace) = match config.strategy {
        Strategy::Forest => (train_forest(config, &data, labels, &base_scores, split, &mut rng), Vec::new()),
        _ => train_boosted(config, &data, labels, &base_scores, split, &mut rng),
    };
    let ensemble = Ensemble {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        schema_fingerprint: dataset.schema.fingerprint(),
        schema: dataset.schema.clone(),
        binning,
        base_scores,
        learning_rate: config.learning_rate,
        trees,
        metadata: TrainingMetadata {
            rows: labels.len(),
            seed: config.seed,
            train_time_ms: Some(started.elapsed().as_secs_f64() * 1000.0),
        },
    };
    Ok((ensemble, trace))
}

fn train_boosted(
    config: &GbdtConfig,
    data: &BinnedData,
    labels: &[u8],
    base_scores: &[f64],
    split: SplitParams,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<Tree>>, Vec<f64>) {
    let n = labels.len();
    let mut scores: Vec<f64> = base_scores.iter().copied().cycle().take(n * N_CLASSES).collect();
    let mut rounds = Vec::with_capacity(config.n_rounds);
    let mut trace = Vec::with_capacity(config.n_rounds);
    let params = GrowParams {
        strategy: config.strategy,
        max_leaves: config.max_leaves,
        max_depth: config.max_depth,
        split,
        leaf: LeafValue::Newton {
            learning_rate: config.learning_rate,
        },
    };
    for _ in 0..config.n_rounds {
        let grads = compute_gradients(labels, &scores, N_CLASSES);
        let rows: Vec<u32> = if config.row_fraction < 1.0 {
            let k = ((n as f64 * config.row_fraction).round() as usize).clamp(1, n);
            let mut rows: Vec<u32> = sample(rng, n, k).into_iter().map(|r| r as u32).collect();
            rows.sort_unstable();
            rows
        } else {
            (0..n as u32).collect()
        };
        let features: Vec<Vec<usize>> = (0..N_CLASSES)
            .map(|_| features_for(rng, data.n_features(), config.feature_fraction))
            .collect();
        let trees: Vec<Tree> = (0..N_CLASSES)
            .into_par_iter()
            .map(|k| grow_tree(data, rows.clone(), &grads.class(k), &features[k], params))
            .collect();
        scores.par_chunks_mut(N_CLASSES).enumerate().for_each(|(r, s)| {
            for (k, tree) in trees.iter().enumerate() {
                s[k] += tree.predict_binned_row(data, r)[0];
            }
        });
        trace.push(cross_entropy(labels, &scores, N_CLASSES));
        rounds.push(trees);
    }
    (rounds, trace)
}

fn train_forest(
    config: &GbdtConfig,
    data: &BinnedData,
    labels: &[u8],
    base_scores: &[f64],
    split: SplitParams,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Tree>> {
    let n = labels.len();
    // Residuals against the prior steer the splits; leaves store class frequencies.
    let scores: Vec<f64> = base_scores.iter().copied().cycle().take(n * N_CLASSES).collect();
    let grads = compute_gradients(labels, &scores, N_CLASSES);
    let sample_size = ((n as f64 * config.row_fraction).round() as usize).max(1);
    let plans: Vec<(Vec<u32>, Vec<usize>)> = (0..config.n_rounds)
        .map(|_| {
            let mut rows: Vec<u32> = (0..sample_size).map(|_| rng.random_range(0..n as u32)).collect();
            rows.sort_unstable();
            (rows, features_for(rng, data.n_features(), config.feature_fraction))
        })
        .collect();
    let params = GrowParams {
        strategy: Strategy::Forest,
        max_leaves: usize::MAX,
        max_depth: config.max_depth,
        split,
        leaf: LeafValue::ClassFrequency { labels },
    };
    plans
        .into_par_iter()
        .map(|(rows, features)| vec![grow_tree(data, rows, &grads, &features, params)])
        .collect()
}

impl Ensemble {
    pub fn mode(&self) -> EncodingMode {
        self.binning.mode
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    /// Errors unless `schema` is the one the model was trained on.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), LearnerError> {
        let found = schema.fingerprint();
        if found == self.schema_fingerprint {
            Ok(())
        } else {
            Err(LearnerError::SchemaMismatch {
                expected: self.schema_fingerprint.clone(),
                found,
            })
        }
    }

    /// Class probabilities for an already binned row.
    pub fn predict_bins(&self, bins: &[u8]) -> Prediction {
        let probabilities: [f64; N_CLASSES] = if self.config.strategy == Strategy::Forest {
            let mut sum = [0.0; N_CLASSES];
            for tree in self.trees.iter().flatten() {
                for (acc, v) in sum.iter_mut().zip(tree.predict_bins(bins)) {
                    *acc += v;
                }
            }
            let total: f64 = sum.iter().sum();
            sum.map(|s| s / total)
        } else {
            let mut scores: Vec<f64> = self.base_scores.clone();
            for round in &self.trees {
                for (k, tree) in round.iter().enumerate() {
                    scores[k] += tree.predict_bins(bins)[0];
                }
            }
            let p = softmax(&scores);
            std::array::from_fn(|k| p[k])
        };
        Prediction::from_probabilities(probabilities)
    }

    /// A row encoded under the model's schema and mode.
    pub fn predict_row(&self, row: SparseRow<'_>) -> Prediction {
        self.predict_bins(&self.binning.bin_sparse_row(row))
    }

    /// Dense values in schema column order; `NaN` marks a missing value.
    pub fn predict_dense(&self, values: &[f64]) -> Prediction {
        assert_eq!(values.len(), self.schema.len(), "dense row width differs from the schema");
        self.predict_bins(&self.binning.bin_dense_row(values))
    }

    pub fn predict_dataset(&self, dataset: &EncodedDataset) -> Result<Vec<Prediction>, LearnerError> {
        self.check_schema(&dataset.schema)?;
        if dataset.mode != self.mode() {
            return Err(LearnerError::ModeMismatch {
                expected: self.mode(),
                found: dataset.mode,
            });
        }
        Ok((0..dataset.n_rows())
            .into_par_iter()
            .map(|i| self.predict_row(dataset.matrix.row(i)))
            .collect())
    }

    /// Canonical text form: pretty JSON with sorted keys and a trailing
    /// newline. Training time is written only when `with_timing` is set.
    pub fn to_artifact(&self, with_timing: bool) -> String {
        let mut copy;
        let this = if with_timing || self.metadata.train_time_ms.is_none() {
            self
        } else {
            copy = self.clone();
            copy.metadata.train_time_ms = None;
            &copy
        };
        let value = serde_json::to_value(this).expect("ensemble serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn from_artifact(text: &str) -> Result<Ensemble, LearnerError> {
        let ensemble: Ensemble = serde_json::from_str(text).map_err(|e| LearnerError::Artifact(e.to_string()))?;
        if ensemble.format_version != FORMAT_VERSION {
            return Err(LearnerError::Artifact(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                ensemble.format_version
            )));
        }
        let actual = ensemble.schema.fingerprint();
        if actual != ensemble.schema_fingerprint {
            return Err(LearnerError::Artifact(format!(
                "embedded schema hashes to {actual}, artifact claims {}",
                ensemble.schema_fingerprint
            )));
        }
        if ensemble.binning.columns.len() != ensemble.schema.len() || ensemble.base_scores.len() != N_CLASSES {
            return Err(LearnerError::Artifact("binning or base scores do not match the schema".into()));
        }
        let leaf_width = if ensemble.config.strategy == Strategy::Forest { N_CLASSES } else { 1 };
        for tree in ensemble.trees.iter().flatten() {
            for (i, node) in tree.nodes.iter().enumerate() {
                let ok = match node {
                    // Pre-order: children come after their parent, which also rules out cycles.
                    crate::tree::Node::Split { feature, left, right, .. } => {
                        *feature < ensemble.schema.len()
                            && *left > i
                            && *right > i
                            && *left < tree.nodes.len()
                            && *right < tree.nodes.len()
                    }
                    crate::tree::Node::Leaf { value } => value.len() == leaf_width,
                };
                if !ok {
                    return Err(LearnerError::Artifact(format!("malformed tree node {i}")));
                }
            }
        }
        Ok(ensemble)
    }
}
