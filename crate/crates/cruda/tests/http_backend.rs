mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use cruda::http_backend::{HttpBackend, Provider};
use cruda_core::backend::{Backend, BackendError, Message, PromptBundle};
use serde_json::{json, Value};

#[derive(Default)]
struct Mock {
    seen: Mutex<Vec<(HeaderMap, Value)>>,
    active: AtomicUsize,
    peak: AtomicUsize,
}

async fn anthropic(State(m): State<Arc<Mock>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let now = m.active.fetch_add(1, Ordering::SeqCst) + 1;
    m.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(40)).await;
    m.active.fetch_sub(1, Ordering::SeqCst);
    m.seen.lock().unwrap().push((headers, body));
    (
        StatusCode::OK,
        Json(json!({"content": [{"type": "text", "text": "get "}, {"type": "text", "text": "contact 51"}],
                    "usage": {"input_tokens": 12, "output_tokens": 3}})),
    )
}

async fn openai(State(m): State<Arc<Mock>>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    m.seen.lock().unwrap().push((headers, body));
    Json(json!({"choices": [{"message": {"role": "assistant", "content": "hello"}}]}))
}

async fn broken() -> (StatusCode, Json<Value>) {
    (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"})))
}

fn start() -> (String, Arc<Mock>) {
    let mock = Arc::new(Mock::default());
    let router = Router::new()
        .route("/anthropic", post(anthropic))
        .route("/openai", post(openai))
        .route("/broken", post(broken))
        .with_state(mock.clone());
    (format!("http://{}", common::spawn(router)), mock)
}

fn prompt() -> PromptBundle {
    PromptBundle {
        query_id: "q".into(),
        stage: "plan".into(),
        attempt: 1,
        repeat: 0,
        messages: vec![Message::system("rules"), Message::system("more rules"), Message::user("do it")],
    }
}

#[test]
fn anthropic_requests_and_replies() {
    let (base, mock) = start();
    let b = HttpBackend::new("claude-x", Provider::Anthropic, &format!("{base}/anthropic"), "k1", 2);
    let c = b.complete(&prompt()).unwrap();
    assert_eq!(c.text, "get contact 51");
    assert_eq!((c.input_tokens, c.output_tokens), (12, 3));
    assert!(c.latency_s > 0.0);
    let seen = mock.seen.lock().unwrap();
    let (headers, body) = &seen[0];
    assert_eq!(headers["x-api-key"], "k1");
    assert!(headers.contains_key("anthropic-version"));
    assert_eq!(body["model"], "claude-x");
    assert_eq!(body["system"], "rules\n\nmore rules");
    assert_eq!(body["messages"], json!([{"role": "user", "content": "do it"}]));
    assert_eq!(body["temperature"], 0);
}

#[test]
fn openai_requests_and_replies_without_usage() {
    let (base, mock) = start();
    let b = HttpBackend::new("gpt-x", Provider::OpenAi, &format!("{base}/openai"), "k2", 2);
    let c = b.complete(&prompt()).unwrap();
    assert_eq!(c.text, "hello");
    assert!(c.input_tokens > 0 && c.output_tokens > 0);
    let seen = mock.seen.lock().unwrap();
    let (headers, body) = &seen[0];
    assert_eq!(headers["authorization"], "Bearer k2");
    assert_eq!(body["messages"].as_array().unwrap().len(), 3);
    assert_eq!(body["messages"][0]["role"], "system");
}

#[test]
fn error_statuses_are_transport_errors() {
    let (base, _) = start();
    let b = HttpBackend::new("gpt-x", Provider::OpenAi, &format!("{base}/broken"), "k", 1);
    match b.complete(&prompt()) {
        Err(BackendError::Transport(m)) => assert!(m.contains("429"), "{m}"),
        other => panic!("{other:?}"),
    }
    let b = HttpBackend::new("gpt-x", Provider::OpenAi, "http://127.0.0.1:1/none", "k", 1);
    assert!(matches!(b.complete(&prompt()), Err(BackendError::Transport(_))));
}

#[test]
fn requests_in_flight_are_capped() {
    let (base, mock) = start();
    let b = HttpBackend::new("claude-x", Provider::Anthropic, &format!("{base}/anthropic"), "k", 2);
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| b.complete(&prompt()).unwrap());
        }
    });
    assert_eq!(mock.seen.lock().unwrap().len(), 8);
    let peak = mock.peak.load(Ordering::SeqCst);
    assert!((1..=2).contains(&peak), "peak {peak}");
}

#[test]
fn provider_is_chosen_by_model_name() {
    assert_eq!(Provider::for_model("claude-3-5-sonnet-20240620"), Provider::Anthropic);
    assert_eq!(Provider::for_model("gpt-4o"), Provider::OpenAi);
}
