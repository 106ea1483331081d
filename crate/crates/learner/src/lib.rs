//! Histogram gradient-boosted trees for five-level urgency classification.
//!
//! Inputs are sparse rows whose absent entries are either missing (every
//! split learns which side missing values go to) or zero. Three growth
//! strategies share one split finder; a bagged forest mode reuses the same
//! machinery with class-frequency leaves.

pub mod binning;
mod config;
mod ensemble;
pub mod metrics;
pub mod objective;
pub mod split;
pub mod tree;
mod tune;

use thiserror::Error;
use triage_core::dataset::EncodingMode;

pub use config::{GbdtConfig, Strategy};
pub use ensemble::{train, train_traced, Ensemble, Prediction, TrainingMetadata, FORMAT_VERSION};
pub use tune::{tune, ParamRange, SearchSpace, TuneReport, TuneSpec, TuneTrial};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no rows to train or score on")]
    EmptyDataset,
    #[error("training labels cover a single urgency level")]
    SingleLabel,
    #[error("schema fingerprint mismatch: model expects {expected}, data has {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("encoding mismatch: model expects {expected} encoding, data is {found}")]
    ModeMismatch { expected: EncodingMode, found: EncodingMode },
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Data(#[from] triage_core::dataset::DatasetError),
}
