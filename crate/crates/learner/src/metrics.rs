use serde::{Deserialize, Serialize};
use triage_core::UrgencyLevel;

use crate::LearnerError;

const K: usize = UrgencyLevel::COUNT;

/// Counts indexed `[true level][predicted level]`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[u8], predicted: &[u8]) -> Self {
        assert_eq!(truth.len(), predicted.len());
        let mut cm = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.counts[t as usize][p as usize] += 1;
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, level: usize) -> u64 {
        self.counts[level].iter().sum()
    }

    /// Recall per level; `None` where the level has no true instances.
    pub fn recalls(&self) -> [Option<f64>; K] {
        std::array::from_fn(|k| {
            let support = self.support(k);
            (support > 0).then(|| self.counts[k][k] as f64 / support as f64)
        })
    }

    pub fn accuracy(&self) -> Result<f64, LearnerError> {
        let total = self.total();
        if total == 0 {
            return Err(LearnerError::EmptyDataset);
        }
        let correct: u64 = (0..K).map(|k| self.counts[k][k]).sum();
        Ok(correct as f64 / total as f64)
    }
}

/// Mean recall over the levels that occur in the truth.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64, LearnerError> {
    let recalls: Vec<f64> = cm.recalls().into_iter().flatten().collect();
    if recalls.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

pub fn balanced_accuracy_of(truth: &[u8], predicted: &[u8]) -> Result<f64, LearnerError> {
    balanced_accuracy(&ConfusionMatrix::from_pairs(truth, predicted))
}
