use std::time::Instant;

use serde::{Deserialize, Serialize};
use triage_core::dataset::{split_stratified, EncodedDataset, SplitSpec};
use triage_learner::{train, GbdtConfig};

use crate::report::{CellMetrics, CellResult, EvalReport, ReportKind, Timing};
use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConfig {
    pub name: String,
    pub config: GbdtConfig,
}

impl NamedConfig {
    pub fn new(name: impl Into<String>, config: GbdtConfig) -> Self {
        Self { name: name.into(), config }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub configs: Vec<NamedConfig>,
    pub repetitions: usize,
    pub test_fraction: f64,
    /// Repetition `r` splits and trains with seed `seed + r`.
    pub seed: u64,
}

impl ComparisonSpec {
    pub fn new(configs: Vec<NamedConfig>, seed: u64) -> Self {
        Self {
            configs,
            repetitions: 5,
            test_fraction: 0.2,
            seed,
        }
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn run_cell(config: &GbdtConfig, dataset: &EncodedDataset, train_rows: &[usize], test_rows: &[usize]) -> Result<CellMetrics, EvalError> {
    let train_set = dataset.subset(train_rows);
    let test_set = dataset.subset(test_rows);
    let start = Instant::now();
    let model = train(config, &train_set)?;
    let train_ms = ms(start);

    let start = Instant::now();
    let predicted: Vec<u8> = model.predict_dataset(&test_set)?.iter().map(|p| p.level.ordinal()).collect();
    let inference_ms = ms(start);

    let fitted: Vec<u8> = model.predict_dataset(&train_set)?.iter().map(|p| p.level.ordinal()).collect();
    let mut metrics = CellMetrics::score(&test_set.labels, &predicted)?;
    metrics.train_balanced_accuracy = Some(CellMetrics::score(&train_set.labels, &fitted)?.balanced_accuracy);
    metrics.timing = Some(Timing {
        train_ms: Some(train_ms),
        inference_ms,
        per_row_inference_ms: inference_ms / test_rows.len() as f64,
    });
    Ok(metrics)
}

/// Trains every config on every dataset variant over repeated stratified
/// splits. All variants must encode the same cohort, so repetition `r` uses
/// the same split for each of them. A failing cell records its error and the
/// rest of the grid still runs.
pub fn run_model_comparison(spec: &ComparisonSpec, datasets: &[EncodedDataset]) -> Result<EvalReport, EvalError> {
    if spec.configs.is_empty() || datasets.is_empty() || spec.repetitions == 0 {
        return Err(EvalError::InvalidSpec("need at least one config, dataset and repetition".into()));
    }
    let labels = &datasets[0].labels;
    if datasets.iter().any(|d| &d.labels != labels) {
        return Err(EvalError::InvalidSpec("dataset variants must encode the same cohort".into()));
    }
    let mut splits = Vec::with_capacity(spec.repetitions);
    for rep in 0..spec.repetitions {
        let seed = spec.seed + rep as u64;
        let split = split_stratified(
            labels,
            &SplitSpec {
                test_fraction: spec.test_fraction,
                seed,
            },
        )?;
        splits.push((seed, split));
    }

    let mut cells = Vec::new();
    for named in &spec.configs {
        for dataset in datasets {
            for (rep, (seed, (train_rows, test_rows))) in splits.iter().enumerate() {
                let config = named.config.clone().with_seed(*seed);
                let outcome = run_cell(&config, dataset, train_rows, test_rows);
                cells.push(CellResult {
                    model: named.name.clone(),
                    variant: dataset.mode,
                    completeness: 1.0,
                    repetition: rep,
                    seed: *seed,
                    error: outcome.as_ref().err().map(|e| e.to_string()),
                    metrics: outcome.ok(),
                });
            }
        }
    }
    Ok(EvalReport::from_cells(ReportKind::Comparison, cells))
}
