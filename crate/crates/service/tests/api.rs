mod support;

use std::time::{Duration, Instant};

use axum::http::{Method, StatusCode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use triage_core::dataset::{build_schema, encode, EncodingMode};
use triage_core::samples::sample_pack;
use triage_core::simulator::{clean, generate_cohort, CohortSpec, InterviewRecord};
use triage_core::UrgencyLevel;
use triage_learner::{train, GbdtConfig};
use triage_service::{is_below_threshold, router, AppState, ServiceConfig, StartupError};

use support::{answer, app, call, exit, fig2_answers, model, start, state_with};

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap()
}

#[tokio::test]
async fn fig2_interview_with_an_early_exit() {
    let (app, state) = app();
    let (id, first) = start(&app, "headache-triage").await;
    assert_eq!(id.len(), 32);
    assert_eq!(first["id"], "headache-triage.headache-now");
    assert_eq!(first["kind"], "boolean");

    let answers = fig2_answers();
    let (_, next) = answer(&app, &id, answers[0].clone()).await;
    assert_eq!(next["finished"], false);
    let options: Vec<&str> = next["question"]["options"].as_array().unwrap().iter().map(|o| o["id"].as_str().unwrap()).collect();
    assert_eq!(options, ["none-of-the-above", "cold-or-flu", "head-trauma"]);
    let (_, next) = answer(&app, &id, answers[1].clone()).await;
    let waiting_on = next["question"]["id"].clone();

    let (status, p) = exit(&app, &id).await;
    assert_eq!(status, StatusCode::OK, "{p}");
    let probs: Vec<f64> = p["probabilities"].as_array().unwrap().iter().map(|x| x["probability"].as_f64().unwrap()).collect();
    assert_eq!(probs.len(), 5);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let levels: Vec<&str> = p["probabilities"].as_array().unwrap().iter().map(|x| x["level"].as_str().unwrap()).collect();
    assert_eq!(levels, ["wait", "planned", "promptly", "immediate", "acute"]);
    assert_eq!(p["answered_questions"], 2);
    let max_path = sample_pack().validate().max_path_by_entry["headache-triage"];
    assert_eq!(p["max_path_length"], max_path);
    assert_eq!(p["below_threshold"], (2.0 / max_path as f64) < 0.7);
    assert_eq!(p["below_threshold"], true);
    assert!(!p["disclaimer"].as_str().unwrap().is_empty());
    assert_eq!(p["ordinal"], UrgencyLevel::ALL.iter().position(|l| l.name() == p["level"]).unwrap());

    // Exiting again is harmless and gives the same answer.
    assert_eq!(exit(&app, &id).await.1, p);

    // The session stayed open on the same question.
    let (_, summary) = call(&app, Method::GET, &format!("/v1/interviews/{id}"), None).await;
    assert_eq!(summary["current_question"], waiting_on);
    assert_eq!(summary["answered_questions"], 2);

    let (_, next) = answer(&app, &id, answers[2].clone()).await;
    assert_eq!(next["finished"], false);
    let (_, done) = answer(&app, &id, answers[3].clone()).await;
    assert_eq!(done, json!({"finished": true, "outcome": "immediate"}));

    // Same outcome as an interview that never asked for a prediction.
    let (plain, _) = start(&app, "headache-triage").await;
    let mut last = Value::Null;
    for a in fig2_answers() {
        last = answer(&app, &plain, a).await.1;
    }
    assert_eq!(last, done);
    assert_eq!(state.sessions.len(), 2);
}

#[tokio::test]
async fn exit_preconditions() {
    let (app, _) = app();
    let (id, _) = start(&app, "headache-triage").await;
    let (status, body) = exit(&app, &id).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "no_answers");

    for a in fig2_answers() {
        answer(&app, &id, a).await;
    }
    let (status, body) = exit(&app, &id).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "interview_finished");
    let (status, body) = answer(&app, &id, json!(true)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("interview_finished")));

    let (status, body) = exit(&app, "0123456789abcdef0123456789abcdef").await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("session_not_found")));
}

#[tokio::test]
async fn request_errors_have_code_and_message() {
    let (app, _) = app();
    let (status, body) = call(&app, Method::POST, "/v1/interviews", Some(r#"{"entry":"nope"}"#)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("unknown_questionnaire")));
    let (status, body) = call(&app, Method::POST, "/v1/interviews", Some("{not json")).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));

    let (id, _) = start(&app, "injury-triage").await;
    let (status, body) = answer(&app, &id, json!(3)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid_answer")));
    let (status, body) = answer(&app, &id, json!("not-an-option")).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid_answer")));
    // Rejected answers leave the interview where it was.
    let (_, summary) = call(&app, Method::GET, &format!("/v1/interviews/{id}"), None).await;
    assert_eq!(summary["answered_questions"], 0);

    let (status, body) = call(&app, Method::GET, "/v2/anything", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (status, body) = call(&app, Method::DELETE, "/v1/interviews", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::METHOD_NOT_ALLOWED, Some("method_not_allowed")));
}

#[tokio::test]
async fn summaries_never_echo_answer_values() {
    let (app, _) = app();
    let (id, _) = start(&app, "injury-triage").await;
    let (_, q) = answer(&app, &id, json!("fall")).await;
    assert!(q["question"]["id"].is_string());
    let (_, summary) = call(&app, Method::GET, &format!("/v1/interviews/{id}"), None).await;
    let text = summary.to_string();
    assert!(!text.contains("fall\""), "{text}");
    assert_eq!(summary["answered"], json!(["injury-triage.mechanism"]));
    assert_eq!(summary["finished"], false);
    assert!(summary.get("outcome").is_none());
}

#[tokio::test]
async fn health_reports_the_model() {
    let (app, _) = app();
    let (status, body) = call(&app, Method::GET, "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["model"]["fingerprint"], model().schema_fingerprint);
    assert_eq!(body["model"]["seed"], 77);
    assert_eq!(body["model"]["rows"], model().metadata.rows);
    assert_eq!(body["model"]["trained_at"], "2026-01-01T00:00:00Z");
}

#[tokio::test]
async fn sessions_expire() {
    let state = state_with(ServiceConfig {
        session_ttl: Duration::from_millis(100),
        ..ServiceConfig::default()
    });
    let app = router(state.clone());
    let (id, _) = start(&app, "headache-triage").await;
    assert_eq!(answer(&app, &id, json!(true)).await.0, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(150)).await;
    assert_eq!(answer(&app, &id, json!(true)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(exit(&app, &id).await.0, StatusCode::NOT_FOUND);

    let (other, _) = start(&app, "headache-triage").await;
    assert_eq!(state.sessions.purge_expired(Instant::now() + Duration::from_secs(1)), 1);
    assert!(state.sessions.get(&other).is_none());
}

#[test]
fn session_ids_are_distinct_and_wide() {
    let ids: std::collections::HashSet<String> = (0..10_000).map(|_| triage_service::session::new_session_id()).collect();
    assert_eq!(ids.len(), 10_000);
    assert!(ids.iter().all(|id| id.len() == 32 && id.chars().all(|c| c.is_ascii_hexdigit())));
}

#[test]
fn startup_rejects_a_foreign_schema() {
    let records = clean(generate_cohort(sample_pack(), &CohortSpec::golden().with_size(400).with_seed(5)).unwrap());
    // A schema built from a few records misses columns of the pack.
    let schema = build_schema(&records[..20]).unwrap();
    let ds = encode(&records[..20], &schema, EncodingMode::MissingAware).unwrap();
    let foreign = train(&GbdtConfig { n_rounds: 2, min_samples_leaf: 1, ..GbdtConfig::default() }, &ds).unwrap();
    let err = AppState::new(sample_pack().clone(), foreign.clone(), ServiceConfig::default(), None).err().unwrap();
    let StartupError::FingerprintMismatch { model, pack } = &err else { panic!("{err}") };
    assert_eq!(model, &foreign.schema_fingerprint);
    let message = err.to_string();
    assert!(message.contains(model.as_str()) && message.contains(pack.as_str()));

    for threshold in [0.0, 1.5, f64::NAN] {
        let config = ServiceConfig {
            completeness_threshold: threshold,
            ..ServiceConfig::default()
        };
        assert!(AppState::new(sample_pack().clone(), support::model().clone(), config, None).is_err());
    }
}

#[test]
fn threshold_flag_flips_exactly_at_the_threshold() {
    assert!(!is_below_threshold(7, 10, 0.7));
    assert!(is_below_threshold(6, 10, 0.7));
    assert!(!is_below_threshold(14, 20, 0.7));
    assert!(is_below_threshold(13, 19, 0.7));
    assert!(!is_below_threshold(19, 19, 1.0));
    assert!(is_below_threshold(18, 19, 1.0));
}

proptest! {
    #[test]
    fn threshold_boundary(max_path in 1usize..60, answered in 0usize..60) {
        let proxy = answered as f64 / max_path as f64;
        prop_assume!(proxy > 0.0 && proxy <= 1.0);
        // At the proxy itself: not below. Just above it: below.
        prop_assert!(!is_below_threshold(answered, max_path, proxy));
        prop_assert!(is_below_threshold(answered, max_path, proxy.next_up()));
        prop_assert!(!is_below_threshold(answered, max_path, proxy.next_down()));
    }
}

fn scripted_cohort(n: usize, seed: u64) -> Vec<InterviewRecord> {
    generate_cohort(sample_pack(), &CohortSpec::golden().with_size(n).with_seed(seed)).unwrap()
}

/// Drives several interviews at once, answer by answer in a random order
/// (and from concurrent tasks), and checks each against the rule engine.
async fn interleaved(records: Vec<InterviewRecord>, seed: u64, exits: bool) {
    let (app, _) = app();
    let mut sessions = Vec::new();
    for r in &records {
        let (id, _) = start(&app, &r.entry).await;
        sessions.push((id, 0usize));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let open: Vec<usize> = (0..records.len()).filter(|&i| sessions[i].1 < records[i].answers.len()).collect();
        if open.is_empty() {
            break;
        }
        // Advance a random batch of sessions concurrently.
        let batch: Vec<usize> = open.iter().copied().filter(|_| rng.random::<f64>() < 0.6).collect();
        let batch = if batch.is_empty() { vec![open[0]] } else { batch };
        let mut tasks = Vec::new();
        for i in batch {
            let app = app.clone();
            let id = sessions[i].0.clone();
            let value = records[i].answers[sessions[i].1].value.to_json();
            let do_exit = exits && rng.random::<f64>() < 0.3;
            tasks.push((i, tokio::spawn(async move {
                if do_exit {
                    let (status, _) = exit(&app, &id).await;
                    assert!(status == StatusCode::OK || status == StatusCode::UNPROCESSABLE_ENTITY);
                }
                answer(&app, &id, value).await
            })));
        }
        for (i, task) in tasks {
            let (status, body) = task.await.unwrap();
            assert_eq!(status, StatusCode::OK, "{body}");
            sessions[i].1 += 1;
            if sessions[i].1 == records[i].answers.len() {
                let expected = sample_pack().outcome_for(&records[i].answers);
                assert_eq!(body["outcome"], expected.name());
            }
        }
    }
    for (r, (id, _)) in records.iter().zip(&sessions) {
        let (_, summary) = call(&app, Method::GET, &format!("/v1/interviews/{id}"), None).await;
        let asked: Vec<String> = r.answers.iter().map(|a| a.key.to_string()).collect();
        assert_eq!(summary["answered"], json!(asked));
        assert_eq!(summary["finished"], true);
    }
}

#[test]
fn two_concurrent_sessions_complete_independently() {
    let records = scripted_cohort(40, 11);
    let headache: Vec<_> = records.iter().filter(|r| r.entry == "headache-triage").take(2).cloned().collect();
    assert_eq!(headache.len(), 2);
    rt().block_on(interleaved(headache, 1, true));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interleaved_sessions_stay_isolated(seed in any::<u64>(), n in 2usize..6, exits in any::<bool>()) {
        let records: Vec<_> = scripted_cohort(n, seed).into_iter().filter(|r| !r.answers.is_empty()).collect();
        rt().block_on(interleaved(records, seed, exits));
    }
}

/// Replays a fixed request script and compares every exchange against the
/// recorded transcript in `tests/golden/`.
#[tokio::test]
async fn recorded_transcript() {
    let (app, _) = app();
    let mut transcript = String::new();
    let mut session = String::new();
    let answers = fig2_answers();
    let script: Vec<(Method, String, Option<String>)> = vec![
        (Method::POST, "/v1/interviews".into(), Some(r#"{"entry":"headache-triage"}"#.into())),
        (Method::POST, "/v1/interviews/{id}/exit".into(), None),
        (Method::POST, "/v1/interviews/{id}/answers".into(), Some(json!({"value": answers[0]}).to_string())),
        (Method::POST, "/v1/interviews/{id}/answers".into(), Some(json!({"value": answers[1]}).to_string())),
        (Method::POST, "/v1/interviews/{id}/exit".into(), None),
        (Method::GET, "/v1/interviews/{id}".into(), None),
        (Method::POST, "/v1/interviews/{id}/answers".into(), Some(json!({"value": answers[2]}).to_string())),
        (Method::POST, "/v1/interviews/{id}/answers".into(), Some(json!({"value": answers[3]}).to_string())),
        (Method::POST, "/v1/interviews/{id}/exit".into(), None),
        (Method::GET, "/v1/interviews/{id}".into(), None),
    ];
    for (method, path, body) in script {
        let uri = path.replace("{id}", &session);
        let (status, mut response) = call(&app, method.clone(), &uri, body.as_deref()).await;
        if let Some(id) = response.get("session_id").and_then(Value::as_str) {
            if session.is_empty() {
                session = id.to_string();
            }
            response["session_id"] = Value::String("{id}".into());
        }
        transcript += &format!("> {method} {path}\n");
        if let Some(b) = body {
            transcript += &format!("> {b}\n");
        }
        transcript += &format!("< {}\n{}\n\n", status.as_u16(), serde_json::to_string_pretty(&response).unwrap());
    }
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fig2-session.transcript");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &transcript).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("transcript missing; run with UPDATE_GOLDEN=1");
    assert_eq!(transcript, expected);
}
