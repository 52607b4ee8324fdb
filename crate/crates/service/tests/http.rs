mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use blocks_advice::api::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, key: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(k) = key {
        req = req.header("Idempotency-Key", k);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

fn app() -> (Router, Arc<AppState>, advice_core::data::Dataset) {
    let (st, d) = common::state();
    (router(st.clone(), None), st, d)
}

async fn create(app: &Router, protocol: &str, example: &str) -> Value {
    let (s, v) = call(app, "POST", "/v1/sessions", Some(json!({"protocol": protocol, "example_id": example})), None).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v
}

fn history_len(v: &Value) -> usize {
    v["history"].as_array().unwrap().len()
}

#[tokio::test]
async fn restrictive_advice_sentence_yields_second_prediction() {
    let (app, _, d) = app();
    let ex = &d.test[0];
    let v = create(&app, "restrictive", &ex.id).await;
    let id = v["session_id"].as_str().unwrap().to_string();
    assert_eq!(id.len(), 32, "128-bit hex id");
    assert_eq!(v["board"], serde_json::to_value(&ex.world).unwrap());
    assert!(v["prediction"]["source"].is_object(), "{v}");
    assert_eq!(history_len(&v["session"]), 1);
    assert_eq!(v["session"]["phase"], "awaiting_feedback");

    let (s, v) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/advice"),
        Some(json!({"head": "target", "text": "the target is in the lower left"})),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(history_len(&v["session"]), 2);
    assert_eq!(v["session"]["phase"], "done");
    let advice = &v["session"]["history"][0]["events"][0];
    assert_eq!(advice["kind"], "restrictive_advice");
    assert_eq!(advice["sentence"]["text"], "the target is in the lower left");
}

#[tokio::test]
async fn advice_on_baseline_session_is_a_conflict_with_expected_events() {
    let (app, _, d) = app();
    let v = create(&app, "baseline", &d.test[0].id).await;
    let id = v["session_id"].as_str().unwrap();
    assert_eq!(v["session"]["phase"], "done");
    let (s, v) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/advice"),
        Some(json!({"head": "source", "text": "the source is in the top left"})),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], "illegal_event");
    assert!(v["expected"].is_array());
}

#[tokio::test]
async fn advice_on_retry_session_lists_retry_and_accept() {
    let (app, _, d) = app();
    let v = create(&app, "retry", &d.test[1].id).await;
    let id = v["session_id"].as_str().unwrap();
    let (s, v) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/advice"),
        Some(json!({"head": "source", "text": "the source is in the top left"})),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let expected: Vec<&str> = v["expected"].as_array().unwrap().iter().map(|e| e.as_str().unwrap()).collect();
    assert!(expected.contains(&"retry") && expected.contains(&"accept"), "{expected:?}");
}

#[tokio::test]
async fn oov_heavy_advice_is_rejected_with_phrasing_hint() {
    let (app, st, d) = app();
    let v = create(&app, "restrictive", &d.test[0].id).await;
    let id = v["session_id"].as_str().unwrap();
    let (s, v) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/advice"),
        Some(json!({"head": "target", "text": "zorp blag quux the"})),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "untokenizable_advice");
    assert_eq!(v["expected"].as_array().unwrap().len(), 4);
    // rejected advice leaves the session where it was
    assert_eq!(history_len(&serde_json::to_value(st.store.snapshot(id).unwrap()).unwrap()), 1);

    let (s, _) = call(&app, "POST", &format!("/v1/sessions/{id}/advice"), Some(json!({"head": "target", "text": "  "})), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn corrective_session_takes_direction_advice() {
    let (app, _, d) = app();
    let v = create(&app, "corrective", &d.test[2].id).await;
    let id = v["session_id"].as_str().unwrap();
    let (s, v) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/advice"),
        Some(json!({"head": "source", "text": "move it a little to the left"})),
        None,
    )
    .await;
    // free-text phrasing may or may not be in vocabulary; either outcome is a
    // well-formed response, never a server error
    assert!(s == StatusCode::OK || s == StatusCode::UNPROCESSABLE_ENTITY, "{s} {v}");
}

#[tokio::test]
async fn retry_then_terminal_state_is_stable() {
    let (app, _, d) = app();
    let v = create(&app, "retry", &d.test[3].id).await;
    let id = v["session_id"].as_str().unwrap();
    assert!(v["session"]["regions"].is_array());
    let (s, v) = call(&app, "POST", &format!("/v1/sessions/{id}/retry"), None, None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(history_len(&v["session"]), 2);
    assert_eq!(v["session"]["phase"], "done");
    let (_, a) = call(&app, "GET", &format!("/v1/sessions/{id}"), None, None).await;
    let (_, b) = call(&app, "GET", &format!("/v1/sessions/{id}"), None, None).await;
    assert_eq!(a, b);
    assert_eq!(a["expected"], json!([]));
    let (s, _) = call(&app, "POST", &format!("/v1/sessions/{id}/accept"), None, None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn accept_finishes_without_repredicting() {
    let (app, _, d) = app();
    let v = create(&app, "restrictive", &d.test[4].id).await;
    let id = v["session_id"].as_str().unwrap();
    let (s, v) = call(&app, "POST", &format!("/v1/sessions/{id}/accept"), Some(json!({})), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["session"]["phase"], "done");
    assert_eq!(history_len(&v["session"]), 1);
    assert_eq!(v["session"]["history"][0]["events"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn mutating_endpoints_are_idempotent_under_a_key() {
    let (app, st, d) = app();
    let body = json!({"protocol": "restrictive", "example_id": d.test[0].id});
    let (s1, a) = call(&app, "POST", "/v1/sessions", Some(body.clone()), Some("k-create")).await;
    let (s2, b) = call(&app, "POST", "/v1/sessions", Some(body), Some("k-create")).await;
    assert_eq!((s1, &a), (s2, &b));
    assert_eq!(st.store.len(), 1);

    let id = a["session_id"].as_str().unwrap();
    let uri = format!("/v1/sessions/{id}/advice");
    let advice = json!({"head": "source", "text": "the source is in the top right"});
    let (s1, a) = call(&app, "POST", &uri, Some(advice.clone()), Some("k-advice")).await;
    let (s2, b) = call(&app, "POST", &uri, Some(advice.clone()), Some("k-advice")).await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!((s1, &a), (s2, &b));
    assert_eq!(history_len(&a["session"]), 2);
    // without the key a repeat is a fresh (now illegal) transition
    let (s3, _) = call(&app, "POST", &uri, Some(advice), None).await;
    assert_eq!(s3, StatusCode::CONFLICT);
}

#[tokio::test]
async fn unknown_things_are_not_found() {
    let (app, _, _) = app();
    let (s, v) = call(&app, "GET", "/v1/sessions/nope", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
    let (s, _) = call(&app, "POST", "/v1/sessions/nope/accept", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/v1/examples/nope", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/v1/sessions", Some(json!({"protocol": "baseline", "example_id": "nope"})), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(
        &app,
        "POST",
        "/v1/sessions",
        Some(json!({"protocol": "baseline", "random": true, "models": {"predictor": "e2e.baseline.v1-0000000000000000"}})),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/v1/sessions", Some(json!({"protocol": "nonsense"})), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn models_and_examples_are_listed() {
    let (app, _, d) = app();
    let (s, v) = call(&app, "GET", "/v1/models", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["models"].as_array().unwrap().len(), 5);
    let protocols = v["protocols"].as_array().unwrap();
    assert_eq!(protocols.len(), 6);
    assert!(protocols.iter().all(|p| p["available"] == true));

    // a session can pin the models it expects
    let restrictive = protocols.iter().find(|p| p["protocol"] == "restrictive").unwrap();
    let (s, v) = call(
        &app,
        "POST",
        "/v1/sessions",
        Some(json!({"protocol": "restrictive", "random": true, "models": restrictive["models"]})),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["session"]["models"], restrictive["models"]);

    let ex = &d.dev[0];
    let (s, v) = call(&app, "GET", &format!("/v1/examples/{}", ex.id), None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["split"], "dev");
    assert_eq!(v["instruction"], ex.instruction.as_str());
}

#[tokio::test]
async fn static_assets_are_served_next_to_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>ui</title>").unwrap();
    let (st, _) = common::state();
    let app = router(st, Some(dir.path().to_path_buf()));
    let (s, v) = call(&app, "GET", "/index.html", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.as_str().unwrap().contains("<title>ui</title>"));
    let (s, _) = call(&app, "GET", "/v1/models", None, None).await;
    assert_eq!(s, StatusCode::OK);
}
