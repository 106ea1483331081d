use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use triage_core::dataset::{split_stratified, EncodedDataset, SplitSpec};

use crate::config::{GbdtConfig, Strategy};
use crate::ensemble::train;
use crate::metrics::balanced_accuracy_of;
use crate::LearnerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamRange {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// Inclusive integer range.
    Int { lo: i64, hi: i64 },
}

impl ParamRange {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ParamRange::Fixed { value } => value,
            ParamRange::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            ParamRange::LogUniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
                }
            }
            ParamRange::Int { lo, hi } => rng.random_range(lo..=hi) as f64,
        }
    }

    fn validate(&self, name: &str) -> Result<(), LearnerError> {
        let ok = match *self {
            ParamRange::Fixed { value } => value.is_finite(),
            ParamRange::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            ParamRange::LogUniform { lo, hi } => lo > 0.0 && hi.is_finite() && lo <= hi,
            ParamRange::Int { lo, hi } => lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(LearnerError::InvalidConfig(format!("bad search range for {name}: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_rounds: ParamRange,
    pub learning_rate: ParamRange,
    pub max_leaves: ParamRange,
    pub max_depth: ParamRange,
    pub min_samples_leaf: ParamRange,
    pub l2_lambda: ParamRange,
    pub feature_fraction: ParamRange,
    pub row_fraction: ParamRange,
}

impl SearchSpace {
    /// A space that only contains `config`.
    pub fn fixed(config: &GbdtConfig) -> Self {
        let f = |value: f64| ParamRange::Fixed { value };
        Self {
            n_rounds: f(config.n_rounds as f64),
            learning_rate: f(config.learning_rate),
            max_leaves: f(config.max_leaves as f64),
            max_depth: f(config.max_depth as f64),
            min_samples_leaf: f(config.min_samples_leaf as f64),
            l2_lambda: f(config.l2_lambda),
            feature_fraction: f(config.feature_fraction),
            row_fraction: f(config.row_fraction),
        }
    }

    /// The default search space for a strategy.
    pub fn for_strategy(strategy: Strategy) -> Self {
        let (max_depth, row_fraction) = match strategy {
            Strategy::Forest => (ParamRange::Int { lo: 6, hi: 16 }, ParamRange::Uniform { lo: 0.5, hi: 1.0 }),
            Strategy::Symmetric => (ParamRange::Int { lo: 4, hi: 10 }, ParamRange::Uniform { lo: 0.6, hi: 1.0 }),
            _ => (ParamRange::Int { lo: 3, hi: 10 }, ParamRange::Uniform { lo: 0.6, hi: 1.0 }),
        };
        Self {
            n_rounds: ParamRange::Int { lo: 50, hi: 200 },
            learning_rate: ParamRange::LogUniform { lo: 0.03, hi: 0.3 },
            max_leaves: ParamRange::Int { lo: 8, hi: 96 },
            max_depth,
            min_samples_leaf: ParamRange::Int { lo: 2, hi: 40 },
            l2_lambda: ParamRange::LogUniform { lo: 0.01, hi: 10.0 },
            feature_fraction: ParamRange::Uniform { lo: 0.5, hi: 1.0 },
            row_fraction,
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        for (name, range) in self.named() {
            range.validate(name)?;
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, &ParamRange); 8] {
        [
            ("n_rounds", &self.n_rounds),
            ("learning_rate", &self.learning_rate),
            ("max_leaves", &self.max_leaves),
            ("max_depth", &self.max_depth),
            ("min_samples_leaf", &self.min_samples_leaf),
            ("l2_lambda", &self.l2_lambda),
            ("feature_fraction", &self.feature_fraction),
            ("row_fraction", &self.row_fraction),
        ]
    }

    /// Draws every parameter in declaration order onto a copy of `template`.
    pub fn sample(&self, template: &GbdtConfig, rng: &mut ChaCha8Rng) -> GbdtConfig {
        let int = |x: f64| x.round().max(1.0) as usize;
        GbdtConfig {
            n_rounds: self.n_rounds.sample(rng).round().max(0.0) as usize,
            learning_rate: self.learning_rate.sample(rng),
            max_leaves: int(self.max_leaves.sample(rng)),
            max_depth: int(self.max_depth.sample(rng)),
            min_samples_leaf: int(self.min_samples_leaf.sample(rng)),
            l2_lambda: self.l2_lambda.sample(rng),
            feature_fraction: self.feature_fraction.sample(rng),
            row_fraction: self.row_fraction.sample(rng),
            ..template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub space: SearchSpace,
    pub budget: usize,
    pub validation_fraction: f64,
    /// Evaluate the template itself as trial 0, so the search can never end
    /// below it.
    pub include_template: bool,
    pub seed: u64,
}

impl TuneSpec {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        Self {
            space: SearchSpace::for_strategy(strategy),
            budget: 30,
            validation_fraction: 0.2,
            include_template: true,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrial {
    pub index: usize,
    pub config: GbdtConfig,
    pub validation_balanced_accuracy: f64,
    pub train_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub trials: Vec<TuneTrial>,
    pub best_index: usize,
}

impl TuneReport {
    pub fn best(&self) -> &TuneTrial {
        &self.trials[self.best_index]
    }
}

/// Random search scored by validation balanced accuracy; the earliest trial
/// wins ties.
pub fn tune(spec: &TuneSpec, template: &GbdtConfig, dataset: &EncodedDataset) -> Result<(GbdtConfig, TuneReport), LearnerError> {
    if spec.budget == 0 {
        return Err(LearnerError::InvalidConfig("tuning budget must be at least 1".into()));
    }
    spec.space.validate()?;
    template.validate()?;
    let (train_rows, valid_rows) = split_stratified(
        &dataset.labels,
        &SplitSpec {
            test_fraction: spec.validation_fraction,
            seed: spec.seed,
        },
    )?;
    let train_set = dataset.subset(&train_rows);
    let valid_set = dataset.subset(&valid_rows);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut candidates = Vec::with_capacity(spec.budget);
    if spec.include_template {
        candidates.push(template.clone());
    }
    while candidates.len() < spec.budget {
        candidates.push(spec.space.sample(template, &mut rng));
    }

    let mut trials = Vec::with_capacity(candidates.len());
    for (index, config) in candidates.into_iter().enumerate() {
        config.validate()?;
        let model = train(&config, &train_set)?;
        let predicted: Vec<u8> = model
            .predict_dataset(&valid_set)?
            .iter()
            .map(|p| p.level.ordinal())
            .collect();
        trials.push(TuneTrial {
            index,
            validation_balanced_accuracy: balanced_accuracy_of(&valid_set.labels, &predicted)?,
            train_time_ms: model.metadata.train_time_ms.unwrap_or(0.0),
            config,
        });
    }
    let mut best_index = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.validation_balanced_accuracy > trials[best_index].validation_balanced_accuracy {
            best_index = i;
        }
    }
    Ok((trials[best_index].config.clone(), TuneReport { trials, best_index }))
}
