use std::time::Instant;

use serde::{Deserialize, Serialize};
use triage_core::dataset::{encode_rows, truncate, TruncationSpec, DEFAULT_SWEEP};
use triage_core::simulator::InterviewRecord;
use triage_learner::Ensemble;

use crate::report::{CellMetrics, CellResult, EvalReport, ReportKind, Timing};
use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Strictly descending, each in (0, 1].
    pub levels: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            levels: DEFAULT_SWEEP.to_vec(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.levels.is_empty() {
            return Err(EvalError::InvalidSpec("no completeness levels".into()));
        }
        for &p in &self.levels {
            TruncationSpec::new(p)?;
        }
        if self.levels.windows(2).any(|w| w[0] <= w[1]) {
            return Err(EvalError::InvalidSpec(format!(
                "completeness levels must be strictly descending, got {:?}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// A trained model taking part in a sweep. Several repetitions of the same
/// name are averaged together.
#[derive(Debug, Clone)]
pub struct SweepModel {
    pub name: String,
    pub repetition: usize,
    pub model: Ensemble,
}

fn run_level(model: &Ensemble, records: &[InterviewRecord], level: f64) -> Result<CellMetrics, EvalError> {
    let spec = TruncationSpec::new(level)?;
    let truncated: Vec<_> = records.iter().map(|r| truncate(r, &spec)).collect();
    let start = Instant::now();
    // The label is the outcome of the complete interview, never of the
    // truncated one.
    let encoded = encode_rows(
        truncated.iter().zip(records).map(|(t, r)| (t.answers.as_slice(), r.outcome)),
        &model.schema,
        model.mode(),
    )?;
    let predicted: Vec<u8> = model.predict_dataset(&encoded)?.iter().map(|p| p.level.ordinal()).collect();
    let inference_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut metrics = CellMetrics::score(&encoded.labels, &predicted)?;
    metrics.timing = Some(Timing {
        train_ms: model.metadata.train_time_ms,
        inference_ms,
        per_row_inference_ms: inference_ms / records.len() as f64,
    });
    Ok(metrics)
}

/// Truncates every held-out interview to each completeness level and scores
/// each model's predictions against the original outcomes.
pub fn run_completeness_sweep(spec: &SweepSpec, models: &[SweepModel], records: &[InterviewRecord]) -> Result<EvalReport, EvalError> {
    spec.validate()?;
    if models.is_empty() {
        return Err(EvalError::InvalidSpec("a sweep needs at least one model".into()));
    }
    if records.is_empty() {
        return Err(EvalError::InvalidSpec("a sweep needs evaluation records".into()));
    }
    let mut cells = Vec::new();
    for m in models {
        for &level in &spec.levels {
            let outcome = run_level(&m.model, records, level);
            cells.push(CellResult {
                model: m.name.clone(),
                variant: m.model.mode(),
                completeness: level,
                repetition: m.repetition,
                seed: m.model.metadata.seed,
                error: outcome.as_ref().err().map(|e| e.to_string()),
                metrics: outcome.ok(),
            });
        }
    }
    // Group by model first so the aggregates come out model-major.
    cells.sort_by_key(|c| {
        let model_index = models.iter().position(|m| m.name == c.model).unwrap();
        let level_index = spec.levels.iter().position(|&l| l == c.completeness).unwrap();
        (model_index, level_index, c.repetition)
    });
    Ok(EvalReport::from_cells(ReportKind::Sweep, cells))
}
