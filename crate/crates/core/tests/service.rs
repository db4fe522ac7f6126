use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use dgmdp::game::event::parse_jsonl;
use dgmdp::game::player::encode_episode;
use dgmdp::game::server::router;
use dgmdp::game::{BonusCondition, EventInput, EventKind, EventStore, ExperimentProtocol, ProtocolId};

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn app() -> Router {
    router(Arc::new(EventStore::in_memory()))
}

async fn new_session(app: &Router, protocol: &str) -> String {
    let (status, body) = call_json(app, "POST", "/sessions", Some(json!({"protocol": protocol, "seed": 3}))).await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_string()
}

/// Three long-queue episodes then one short, back to back.
fn play(protocol: &ExperimentProtocol) -> Vec<EventInput> {
    let mut out = Vec::new();
    let mut tick = 0;
    for (tau, step) in [(6, 7), (10, 11), (4, 5), (8, 1)] {
        tick = encode_episode(protocol, tau, BonusCondition::None, step, tick, &mut out) + 1;
    }
    out
}

#[tokio::test]
async fn session_lifecycle() {
    let app = app();
    let (status, body) = call_json(&app, "POST", "/sessions", Some(json!({"protocol": "EXP2", "seed": 11}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = body["session_id"].as_str().unwrap().to_string();
    assert_eq!(body["config"]["protocol"]["tick_ms"], 1000);
    assert_eq!(body["config"]["seed"], 11);

    let protocol = ExperimentProtocol::builtin(ProtocolId::Exp2, None).unwrap();
    let events = play(&protocol);
    let (status, ack) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/events"),
        Some(serde_json::to_value(&events).unwrap()),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["accepted"], events.len());
    assert_eq!(ack["violations"], json!([]));

    let (status, summary) = call_json(&app, "GET", &format!("/sessions/{id}/summary"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["session"], id.as_str());
    assert_eq!(summary["rejected"], false);

    let (status, bytes) = call(&app, "GET", &format!("/export?filter=session:{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let exported = parse_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(exported.len(), events.len());
    assert!(exported.iter().all(|e| e.session == id && e.v == 1));
}

#[tokio::test]
async fn export_filters_by_protocol() {
    let app = app();
    let a = new_session(&app, "EXP1").await;
    let b = new_session(&app, "EXP4").await;
    for id in [&a, &b] {
        let ev = json!([{"tick": 0, "ms": 0, "kind": "EPISODE_START", "payload": {"tau": 6, "condition": "none"}}]);
        let (status, _) = call_json(&app, "POST", &format!("/sessions/{id}/events"), Some(ev)).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, bytes) = call(&app, "GET", "/export?filter=protocol:EXP4", None).await;
    let events = parse_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].session, b);
    let (_, bytes) = call(&app, "GET", "/export", None).await;
    assert_eq!(parse_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap().len(), 2);
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let (status, body) = call_json(&app, "GET", "/sessions/nope/summary", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_session");

    let (status, body) = call_json(&app, "POST", "/sessions", Some(json!({"protocol": "EXP9"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "unknown_protocol");

    let id = new_session(&app, "EXP2").await;
    let uri = format!("/sessions/{id}/events");
    let late = json!([{"tick": 5, "ms": 5000, "kind": "EPISODE_START", "payload": {"tau": 6}}]);
    assert_eq!(call_json(&app, "POST", &uri, Some(late.clone())).await.0, StatusCode::OK);
    let (status, body) = call_json(&app, "POST", &uri, Some(late)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "duplicate_event");
    let early = json!([{"tick": 2, "ms": 2000, "kind": "IDLE_WARNING"}]);
    let (status, body) = call_json(&app, "POST", &uri, Some(early)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "out_of_order_tick");

    let (status, body) = call_json(&app, "GET", "/export?filter=bogus", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_params");
}

#[tokio::test]
async fn rule_breaks_are_flagged_not_refused() {
    let app = app();
    let id = new_session(&app, "EXP2").await;
    // Served without a queue selection.
    let ev = json!([
        {"tick": 0, "ms": 0, "kind": "EPISODE_START", "payload": {"tau": 6, "condition": "none"}},
        {"tick": 1, "ms": 1000, "kind": "SERVED", "payload": {"queue": "down", "points": 900.0}}
    ]);
    let (status, ack) = call_json(&app, "POST", &format!("/sessions/{id}/events"), Some(ev)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["accepted"], 2);
    assert_eq!(ack["violations"][0][0], 1);
}

#[tokio::test]
async fn rejected_session_is_closed() {
    let app = app();
    let id = new_session(&app, "EXP2").await;
    let uri = format!("/sessions/{id}/events");
    let ev = serde_json::to_value(vec![EventInput::new(0, 0, EventKind::Rejected)]).unwrap();
    assert_eq!(call_json(&app, "POST", &uri, Some(ev)).await.0, StatusCode::OK);
    let ev = serde_json::to_value(vec![EventInput::new(1, 1000, EventKind::IdleWarning)]).unwrap();
    let (status, body) = call_json(&app, "POST", &uri, Some(ev)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "session_closed");
}
