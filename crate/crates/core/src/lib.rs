//! Building blocks of the triage workbench: the questionnaire rule engine that
//! runs deterministic interviews, the synthetic cohort simulator that stands in
//! for real interview logs, and the sparse encoders that turn interviews into
//! training data.

pub mod dataset;
pub mod questionnaire;
pub mod samples;
pub mod simulator;
mod urgency;

pub use questionnaire::{Answer, AnswerValue, QuestionKey, QuestionKind};
pub use urgency::{ParseUrgencyError, UrgencyLevel};
