//! Experiment series over trained triage models: encoding and learner
//! comparisons with repeated stratified splits, completeness sweeps over
//! truncated interviews, and report emission.

mod comparison;
mod emit;
mod report;
mod sweep;

pub use comparison::{run_model_comparison, ComparisonSpec, NamedConfig};
pub use emit::{emit_report, EmitOptions, ReportFormat};
pub use report::{Aggregate, CellMetrics, CellResult, EvalReport, ReportKind, Timing};
pub use sweep::{run_completeness_sweep, SweepModel, SweepSpec};
pub use triage_learner::metrics::{balanced_accuracy, balanced_accuracy_of, ConfusionMatrix};

use triage_core::dataset::DatasetError;
use triage_learner::LearnerError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("unknown report format {0:?} (expected tsv, meta or plotdata)")]
    UnknownFormat(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Data(#[from] DatasetError),
}
