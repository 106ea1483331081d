use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::LearnerError;

/// How trees are grown and combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Best-first: split the frontier leaf with the largest gain.
    LeafWise,
    /// Depth-first by level: split every splittable node at each depth.
    LevelWise,
    /// Oblivious trees: one shared split per depth.
    Symmetric,
    /// Bagged trees with class-probability leaves, no boosting.
    Forest,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::LeafWise, Strategy::LevelWise, Strategy::Symmetric, Strategy::Forest];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::LeafWise => "leaf-wise",
            Strategy::LevelWise => "level-wise",
            Strategy::Symmetric => "symmetric",
            Strategy::Forest => "forest",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected leaf-wise, level-wise, symmetric or forest)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub strategy: Strategy,
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    /// Not used by leaf-wise growth, which is bounded by `max_leaves` alone.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_lambda: f64,
    pub n_bins: usize,
    pub feature_fraction: f64,
    /// For the forest strategy this is the bootstrap sample size as a
    /// fraction of the training rows, drawn with replacement.
    pub row_fraction: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::LeafWise,
            n_rounds: 100,
            learning_rate: 0.1,
            max_leaves: 31,
            max_depth: 6,
            min_samples_leaf: 20,
            l2_lambda: 1.0,
            n_bins: 255,
            feature_fraction: 1.0,
            row_fraction: 1.0,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    /// Defaults for a strategy. Forests grow (nearly) full trees, as bagged
    /// forests conventionally do; shallow bagged trees underfit badly here.
    pub fn for_strategy(strategy: Strategy) -> Self {
        match strategy {
            Strategy::Forest => Self {
                strategy,
                max_depth: 20,
                min_samples_leaf: 1,
                ..Self::default()
            },
            _ => Self {
                strategy,
                ..Self::default()
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |msg: String| Err(LearnerError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must be in (0, 1], got {}", self.learning_rate));
        }
        if self.max_leaves == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return bad("max_leaves, max_depth and min_samples_leaf must be positive".into());
        }
        if self.strategy == Strategy::Forest && self.n_rounds == 0 {
            return bad("a forest needs at least one tree".into());
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad(format!("l2_lambda must be a non-negative number, got {}", self.l2_lambda));
        }
        if !(2..=255).contains(&self.n_bins) {
            return bad(format!("n_bins must be in [2, 255], got {}", self.n_bins));
        }
        for (name, value) in [("feature_fraction", self.feature_fraction), ("row_fraction", self.row_fraction)] {
            if !(value > 0.0 && value <= 1.0) {
                return bad(format!("{name} must be in (0, 1], got {value}"));
            }
        }
        Ok(())
    }
}
