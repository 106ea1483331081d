use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use triage_core::dataset::{encode_rows, schema_from_pack, FeatureSchema};
use triage_core::questionnaire::{EngineError, InterviewState, Pack, Question};
use triage_core::{AnswerValue, QuestionKey, QuestionKind, UrgencyLevel};
use triage_learner::Ensemble;

use crate::session::SessionStore;

pub const DEFAULT_DISCLAIMER: &str = "This is an automated estimate from an unfinished interview and may be wrong. \
Finish the interview for a reliable recommendation, and call emergency services if you feel seriously unwell.";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// Completeness proxy below which a prediction is flagged.
    pub completeness_threshold: f64,
    pub session_ttl: Duration,
    pub disclaimer: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            completeness_threshold: 0.7,
            session_ttl: Duration::from_secs(30 * 60),
            disclaimer: DEFAULT_DISCLAIMER.to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StartupError {
    #[error("model schema fingerprint {model} does not match the questionnaire pack schema fingerprint {pack}")]
    FingerprintMismatch { model: String, pack: String },
    #[error("completeness threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("session ttl must be positive")]
    InvalidTtl,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelInfo {
    pub fingerprint: String,
    /// RFC 3339 time the artifact was written, when known.
    pub trained_at: Option<String>,
    pub seed: u64,
    pub rows: usize,
    pub strategy: String,
}

/// Everything a request handler needs; immutable apart from the sessions.
pub struct AppState {
    pack: Pack,
    model: Ensemble,
    schema: FeatureSchema,
    config: ServiceConfig,
    max_path: BTreeMap<String, usize>,
    model_info: ModelInfo,
    pub sessions: SessionStore,
}

impl AppState {
    pub fn new(pack: Pack, model: Ensemble, config: ServiceConfig, trained_at: Option<String>) -> Result<Self, StartupError> {
        let schema = schema_from_pack(&pack);
        if schema.fingerprint() != model.schema_fingerprint {
            return Err(StartupError::FingerprintMismatch {
                model: model.schema_fingerprint.clone(),
                pack: schema.fingerprint(),
            });
        }
        if !(config.completeness_threshold > 0.0 && config.completeness_threshold <= 1.0) {
            return Err(StartupError::InvalidThreshold(config.completeness_threshold));
        }
        if config.session_ttl.is_zero() {
            return Err(StartupError::InvalidTtl);
        }
        let max_path = pack.validate().max_path_by_entry;
        let model_info = ModelInfo {
            fingerprint: model.schema_fingerprint.clone(),
            trained_at,
            seed: model.metadata.seed,
            rows: model.metadata.rows,
            strategy: model.config.strategy.name().to_string(),
        };
        Ok(Self {
            sessions: SessionStore::new(config.session_ttl),
            pack,
            model,
            schema,
            config,
            max_path,
            model_info,
        })
    }

    pub fn pack(&self) -> &Pack {
        &self.pack
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Longest route through the pack from a questionnaire's entry, counted in
    /// questions.
    pub fn max_path(&self, entry: &str) -> usize {
        self.max_path.get(entry).copied().unwrap_or(0)
    }

    /// Predicts the outcome of an unfinished interview. Never touches the
    /// interview itself.
    pub fn predict(&self, state: &InterviewState) -> Result<PredictionResponse, ApiError> {
        if state.answers.is_empty() {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "no_answers",
                "at least one answer is needed before a prediction can be made",
            ));
        }
        // The label is a placeholder; only the features are used.
        let encoded = encode_rows([(state.answers.as_slice(), UrgencyLevel::Wait)], &self.schema, self.model.mode())
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let prediction = self.model.predict_row(encoded.matrix.row(0));
        let answered = state.answers.len();
        let max_path = self.max_path(&state.entry).max(1);
        let completeness = answered as f64 / max_path as f64;
        Ok(PredictionResponse {
            level: prediction.level.name().to_string(),
            ordinal: prediction.level.ordinal(),
            probabilities: UrgencyLevel::ALL
                .iter()
                .map(|&l| LevelProbability {
                    level: l.name().to_string(),
                    probability: prediction.probabilities[l.ordinal() as usize],
                })
                .collect(),
            answered_questions: answered,
            max_path_length: max_path,
            completeness_proxy: completeness,
            below_threshold: is_below_threshold(answered, max_path, self.config.completeness_threshold),
            disclaimer: self.config.disclaimer.clone(),
        })
    }
}

/// `answered / max_path < threshold`; a proxy exactly at the threshold is not
/// flagged.
pub fn is_below_threshold(answered: usize, max_path: usize, threshold: f64) -> bool {
    (answered as f64 / max_path.max(1) as f64) < threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProbability {
    pub level: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub level: String,
    pub ordinal: u8,
    /// All five levels in ordinal order.
    pub probabilities: Vec<LevelProbability>,
    pub answered_questions: usize,
    pub max_path_length: usize,
    pub completeness_proxy: f64,
    pub below_threshold: bool,
    pub disclaimer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePayload {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionPayload {
    pub id: String,
    pub label: String,
}

/// Everything a client needs to render one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionPayload {
    /// Qualified `questionnaire.question` id.
    pub id: String,
    pub questionnaire: String,
    pub question: String,
    pub prompt: String,
    pub kind: QuestionKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<OptionPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangePayload>,
}

impl QuestionPayload {
    fn new(key: &QuestionKey, q: &Question) -> Self {
        Self {
            id: key.to_string(),
            questionnaire: key.questionnaire.clone(),
            question: key.question.clone(),
            prompt: q.prompt.clone(),
            kind: q.kind,
            options: q
                .options
                .iter()
                .map(|o| OptionPayload {
                    id: o.id.clone(),
                    label: o.label.clone(),
                })
                .collect(),
            range: q.range.map(|(min, max)| RangePayload { min, max }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ApiErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    fn internal(message: String) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn session_not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", "no such interview, or it has expired")
    }

    fn finished() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "interview_finished",
            "the interview is finished; its outcome is available from GET /v1/interviews/{id}",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", rejection.body_text())
    }
}

#[derive(Debug, Deserialize)]
struct StartRequest {
    entry: String,
}

#[derive(Debug, Deserialize)]
struct AnswerRequest {
    value: Value,
}

#[derive(Debug, Serialize)]
struct StartResponse {
    session_id: String,
    question: QuestionPayload,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum AnswerResponse {
    Next { finished: bool, question: QuestionPayload },
    Done { finished: bool, outcome: String },
}

#[derive(Debug, Serialize)]
struct SessionSummary {
    session_id: String,
    entry: String,
    answered_questions: usize,
    /// Ids only; answer values are never echoed back.
    answered: Vec<String>,
    current_question: Option<String>,
    finished: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<String>,
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    model: ModelInfo,
    active_sessions: usize,
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

fn payload(state: &AppState, key: &QuestionKey) -> Result<QuestionPayload, ApiError> {
    let q = state
        .pack
        .question(key)
        .ok_or_else(|| ApiError::internal(format!("routing reached unknown question {key}")))?;
    Ok(QuestionPayload::new(key, q))
}

async fn start(State(state): State<Shared>, body: Result<Json<StartRequest>, JsonRejection>) -> Result<(StatusCode, Json<StartResponse>), ApiError> {
    let Json(req) = body?;
    let interview = state.pack.start(&req.entry, "").map_err(|e| match e {
        EngineError::UnknownQuestionnaire(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_questionnaire", e.to_string()),
        other => ApiError::internal(other.to_string()),
    })?;
    let key = interview.current.clone().expect("a new interview has a question");
    let question = payload(&state, &key)?;
    let session_id = state.sessions.insert(interview);
    tracing::debug!(%session_id, entry = %req.entry, "interview started");
    Ok((StatusCode::CREATED, Json(StartResponse { session_id, question })))
}

async fn answer(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> ApiResult<AnswerResponse> {
    let Json(req) = body?;
    state
        .sessions
        .with_session(&id, |session| {
            let Some(current) = session.state.current.clone() else {
                return Err(ApiError::finished());
            };
            let kind = state.pack.question(&current).map(|q| q.kind).ok_or_else(|| ApiError::internal(format!("unknown question {current}")))?;
            let value = AnswerValue::from_json(&req.value, kind).ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_answer",
                    format!("a {kind} answer is expected for {current}"),
                )
            })?;
            state.pack.submit_answer_in_place(&mut session.state, value).map_err(|e| match e {
                EngineError::InvalidAnswer(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_answer", m),
                EngineError::AlreadyFinished => ApiError::finished(),
                other => ApiError::internal(other.to_string()),
            })?;
            Ok(match (&session.state.current, session.state.outcome) {
                (Some(next), _) => AnswerResponse::Next {
                    finished: false,
                    question: payload(&state, next)?,
                },
                (None, Some(outcome)) => AnswerResponse::Done {
                    finished: true,
                    outcome: outcome.name().to_string(),
                },
                (None, None) => return Err(ApiError::internal("finished interview without an outcome".into())),
            })
        })
        .ok_or_else(ApiError::session_not_found)?
        .map(Json)
}

async fn exit(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<PredictionResponse> {
    // Predict from a snapshot; the session stays open and unchanged.
    let snapshot = state
        .sessions
        .with_session(&id, |s| s.state.clone())
        .ok_or_else(ApiError::session_not_found)?;
    if snapshot.is_finished() {
        return Err(ApiError::finished());
    }
    state.predict(&snapshot).map(Json)
}

async fn summary(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<SessionSummary> {
    let s = state
        .sessions
        .with_session(&id, |s| s.state.clone())
        .ok_or_else(ApiError::session_not_found)?;
    Ok(Json(SessionSummary {
        session_id: id,
        entry: s.entry.clone(),
        answered_questions: s.answers.len(),
        answered: s.answers.iter().map(|a| a.key.to_string()).collect(),
        current_question: s.current.as_ref().map(|k| k.to_string()),
        finished: s.is_finished(),
        outcome: s.outcome.map(|o| o.name().to_string()),
    }))
}

async fn health(State(state): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok",
        model: state.model_info.clone(),
        active_sessions: state.sessions.len(),
    })
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/interviews", post(start))
        .route("/v1/interviews/{id}", get(summary))
        .route("/v1/interviews/{id}/answers", post(answer))
        .route("/v1/interviews/{id}/exit", post(exit))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}
