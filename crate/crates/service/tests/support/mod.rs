#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;
use triage_core::dataset::{encode, schema_from_pack, EncodingMode};
use triage_core::samples::sample_pack;
use triage_core::simulator::{clean, generate_cohort, CohortSpec};
use triage_learner::{train, Ensemble, GbdtConfig};
use triage_service::{router, AppState, ServiceConfig};

/// A small missing-aware model over the sample pack, trained once per test
/// binary.
pub fn model() -> &'static Ensemble {
    static MODEL: OnceLock<Ensemble> = OnceLock::new();
    MODEL.get_or_init(|| {
        let records = clean(generate_cohort(sample_pack(), &CohortSpec::golden().with_size(3_000).with_seed(77)).unwrap());
        let ds = encode(&records, &schema_from_pack(sample_pack()), EncodingMode::MissingAware).unwrap();
        let config = GbdtConfig {
            n_rounds: 30,
            ..GbdtConfig::default()
        }
        .with_seed(77);
        train(&config, &ds).unwrap()
    })
}

pub fn state_with(config: ServiceConfig) -> Arc<AppState> {
    Arc::new(AppState::new(sample_pack().clone(), model().clone(), config, Some("2026-01-01T00:00:00Z".into())).unwrap())
}

pub fn app() -> (Router, Arc<AppState>) {
    let state = state_with(ServiceConfig::default());
    (router(state.clone()), state)
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn start(app: &Router, entry: &str) -> (String, Value) {
    let (status, body) = call(app, Method::POST, "/v1/interviews", Some(&format!(r#"{{"entry":"{entry}"}}"#))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    (body["session_id"].as_str().unwrap().to_string(), body["question"].clone())
}

pub async fn answer(app: &Router, id: &str, value: Value) -> (StatusCode, Value) {
    let body = serde_json::json!({ "value": value }).to_string();
    call(app, Method::POST, &format!("/v1/interviews/{id}/answers"), Some(&body)).await
}

pub async fn exit(app: &Router, id: &str) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/v1/interviews/{id}/exit"), None).await
}

/// The head-trauma interview: headache now, caused by a blow, an injury to
/// the head, with serious force.
pub fn fig2_answers() -> Vec<Value> {
    vec![
        Value::Bool(true),
        Value::String("head-trauma".into()),
        serde_json::json!(["head-injury"]),
        Value::Bool(true),
    ]
}
