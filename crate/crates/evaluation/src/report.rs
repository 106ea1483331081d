use serde::{Deserialize, Serialize};
use triage_core::dataset::EncodingMode;
use triage_core::UrgencyLevel;
use triage_learner::metrics::{balanced_accuracy, ConfusionMatrix};

use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Comparison,
    Sweep,
}

/// Wall-clock measurements in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Absent when the model was trained outside the experiment.
    pub train_ms: Option<f64>,
    pub inference_ms: f64,
    pub per_row_inference_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub rows: usize,
    /// Balanced accuracy on the rows the model was fit on, when known.
    pub train_balanced_accuracy: Option<f64>,
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    /// Indexed by urgency ordinal; `None` for levels absent from the truth.
    pub recall: [Option<f64>; UrgencyLevel::COUNT],
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl CellMetrics {
    pub(crate) fn score(truth: &[u8], predicted: &[u8]) -> Result<Self, EvalError> {
        let confusion = ConfusionMatrix::from_pairs(truth, predicted);
        Ok(Self {
            rows: truth.len(),
            train_balanced_accuracy: None,
            balanced_accuracy: balanced_accuracy(&confusion)?,
            accuracy: confusion.accuracy()?,
            recall: confusion.recalls(),
            confusion,
            timing: None,
        })
    }
}

/// One experiment cell: a model on one dataset variant at one completeness
/// level in one repetition. Failed cells keep their error and are left out
/// of the aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: String,
    pub variant: EncodingMode,
    pub completeness: f64,
    pub repetition: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<CellMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub variant: EncodingMode,
    pub completeness: f64,
    /// Successful repetitions averaged.
    pub repetitions: usize,
    pub failed: usize,
    pub mean_train_balanced_accuracy: Option<f64>,
    pub mean_balanced_accuracy: Option<f64>,
    /// Sample standard deviation; 0 for a single repetition.
    pub std_balanced_accuracy: Option<f64>,
    pub mean_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: ReportKind,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

impl EvalReport {
    /// Builds the report, grouping cells by (model, variant, completeness) in
    /// order of first appearance.
    pub fn from_cells(kind: ReportKind, cells: Vec<CellResult>) -> Self {
        let mut keys: Vec<(String, EncodingMode, f64)> = Vec::new();
        for c in &cells {
            let key = (c.model.clone(), c.variant, c.completeness);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let aggregates = keys
            .into_iter()
            .map(|(model, variant, completeness)| {
                let group: Vec<&CellResult> = cells
                    .iter()
                    .filter(|c| c.model == model && c.variant == variant && c.completeness == completeness)
                    .collect();
                let ok: Vec<&CellMetrics> = group.iter().filter_map(|c| c.metrics.as_ref()).collect();
                let ba: Vec<f64> = ok.iter().map(|m| m.balanced_accuracy).collect();
                let acc: Vec<f64> = ok.iter().map(|m| m.accuracy).collect();
                let train_ba: Vec<f64> = ok.iter().filter_map(|m| m.train_balanced_accuracy).collect();
                let timings: Vec<&Timing> = ok.iter().filter_map(|m| m.timing.as_ref()).collect();
                let mean_timing = (!timings.is_empty() && timings.len() == ok.len()).then(|| {
                    let train: Vec<f64> = timings.iter().filter_map(|t| t.train_ms).collect();
                    Timing {
                        train_ms: if train.len() == timings.len() { mean(&train) } else { None },
                        inference_ms: mean(&timings.iter().map(|t| t.inference_ms).collect::<Vec<_>>()).unwrap(),
                        per_row_inference_ms: mean(&timings.iter().map(|t| t.per_row_inference_ms).collect::<Vec<_>>())
                            .unwrap(),
                    }
                });
                Aggregate {
                    repetitions: ok.len(),
                    failed: group.len() - ok.len(),
                    mean_train_balanced_accuracy: if train_ba.len() == ok.len() { mean(&train_ba) } else { None },
                    mean_balanced_accuracy: mean(&ba),
                    std_balanced_accuracy: sample_std(&ba),
                    mean_accuracy: mean(&acc),
                    mean_timing,
                    model,
                    variant,
                    completeness,
                }
            })
            .collect();
        Self { kind, cells, aggregates }
    }

    pub fn aggregate(&self, model: &str, variant: EncodingMode, completeness: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.model == model && a.variant == variant && a.completeness == completeness)
    }

    /// Drops every wall-clock measurement, leaving a report that depends only
    /// on data and seeds.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for m in out.cells.iter_mut().filter_map(|c| c.metrics.as_mut()) {
            m.timing = None;
        }
        for a in &mut out.aggregates {
            a.mean_timing = None;
        }
        out
    }

    /// Completeness levels in first-appearance order.
    pub fn levels(&self) -> Vec<f64> {
        let mut levels: Vec<f64> = Vec::new();
        for a in &self.aggregates {
            if !levels.contains(&a.completeness) {
                levels.push(a.completeness);
            }
        }
        levels
    }

    /// Distinct (model, variant) rows in first-appearance order.
    pub fn models(&self) -> Vec<(String, EncodingMode)> {
        let mut models: Vec<(String, EncodingMode)> = Vec::new();
        for a in &self.aggregates {
            let key = (a.model.clone(), a.variant);
            if !models.contains(&key) {
                models.push(key);
            }
        }
        models
    }
}
