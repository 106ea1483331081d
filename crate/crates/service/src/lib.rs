//! HTTP sidecar for live triage interviews: runs the questionnaire engine per
//! session and, when a patient leaves early, predicts the likely outcome of
//! the unfinished interview. Also hosts the `triage` command line.

pub mod api;
pub mod cli;
pub mod session;

pub use api::{is_below_threshold, router, AppState, PredictionResponse, QuestionPayload, ServiceConfig, StartupError};
pub use session::SessionStore;
