//! HTTP backend behavior against a local OpenAI-compatible stub server:
//! wire format, retry schedule, auth failures, malformed responses, and
//! the disk cache sitting in front of the network.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use discern_core::backend::{
    BackendError, CachedBackend, CompletionBackend, DecodeParams, DiskCache, HttpBackend,
    HttpBackendConfig, RetryPolicy,
};

#[derive(Clone, Default)]
struct ServerState {
    hits: Arc<AtomicU32>,
    bodies: Arc<Mutex<Vec<Value>>>,
    auth_headers: Arc<Mutex<Vec<Option<String>>>>,
    /// Status codes to emit before finally answering 200.
    failures: Arc<Mutex<Vec<u16>>>,
    /// When set, reply 200 with this exact body instead of a completion.
    static_body: Arc<Mutex<Option<Value>>>,
}

async fn completions(
    State(state): State<ServerState>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    state.hits.fetch_add(1, Ordering::SeqCst);
    state.bodies.lock().unwrap().push(body.clone());
    state.auth_headers.lock().unwrap().push(
        headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .map(String::from),
    );
    if let Some(status) = state.failures.lock().unwrap().pop() {
        return (
            StatusCode::from_u16(status).unwrap(),
            Json(json!({"error": "injected"})),
        );
    }
    if let Some(body) = state.static_body.lock().unwrap().clone() {
        return (StatusCode::OK, Json(body));
    }
    let content = format!(
        "echo:{}",
        body["messages"][0]["content"].as_str().unwrap_or("")
    );
    (
        StatusCode::OK,
        Json(json!({
            "id": "cmpl-1",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
        })),
    )
}

async fn spawn_server(state: ServerState) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    format!("http://{addr}")
}

fn fast_retry(base_url: &str, attempts: u32) -> HttpBackend {
    let mut config = HttpBackendConfig::new(base_url);
    config.retry = RetryPolicy {
        max_attempts: attempts,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(5),
    };
    HttpBackend::new(config).unwrap()
}

fn params() -> DecodeParams {
    DecodeParams::new("test-model", 0.7, 128)
}

#[tokio::test]
async fn sends_the_expected_wire_format() {
    let state = ServerState::default();
    let base = spawn_server(state.clone()).await;
    let backend = fast_retry(&base, 3);
    let out = backend
        .complete("what is 2+2?", &params().with_seed(9), 0)
        .await
        .unwrap();
    assert_eq!(out, "echo:what is 2+2?");

    let bodies = state.bodies.lock().unwrap();
    let body = &bodies[0];
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "what is 2+2?");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["max_tokens"], 128);
    assert_eq!(body["seed"], 9);
}

#[tokio::test]
async fn bearer_token_comes_from_config() {
    let state = ServerState::default();
    let base = spawn_server(state.clone()).await;
    let mut config = HttpBackendConfig::new(&base);
    config.api_key = Some("sk-test".into());
    let backend = HttpBackend::new(config).unwrap();
    backend.complete("hi", &params(), 0).await.unwrap();
    let auth = state.auth_headers.lock().unwrap();
    assert_eq!(auth[0].as_deref(), Some("Bearer sk-test"));
}

#[tokio::test]
async fn transient_failures_are_retried_to_success() {
    let state = ServerState::default();
    *state.failures.lock().unwrap() = vec![500, 429];
    let base = spawn_server(state.clone()).await;
    let backend = fast_retry(&base, 5);
    let out = backend.complete("hello", &params(), 0).await.unwrap();
    assert_eq!(out, "echo:hello");
    assert_eq!(state.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn retry_cap_exhaustion_is_reported() {
    let state = ServerState::default();
    *state.failures.lock().unwrap() = vec![429; 10];
    let base = spawn_server(state.clone()).await;
    let backend = fast_retry(&base, 3);
    let err = backend.complete("hello", &params(), 0).await.unwrap_err();
    match err {
        BackendError::RateLimitExhausted { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("unexpected error: {other:?}"),
    }
    assert_eq!(state.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn auth_failures_do_not_retry() {
    let state = ServerState::default();
    *state.failures.lock().unwrap() = vec![401; 5];
    let base = spawn_server(state.clone()).await;
    let backend = fast_retry(&base, 5);
    let err = backend.complete("hello", &params(), 0).await.unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)), "got {err:?}");
    assert_eq!(state.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn non_retryable_status_is_an_api_error() {
    let state = ServerState::default();
    *state.failures.lock().unwrap() = vec![404];
    let base = spawn_server(state.clone()).await;
    let backend = fast_retry(&base, 5);
    let err = backend.complete("hello", &params(), 0).await.unwrap_err();
    assert!(
        matches!(err, BackendError::Api { status: 404, .. }),
        "got {err:?}"
    );
    assert_eq!(state.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn missing_message_content_is_malformed() {
    let state = ServerState::default();
    *state.static_body.lock().unwrap() = Some(json!({"choices": [{"message": {}}]}));
    let base = spawn_server(state.clone()).await;
    let backend = fast_retry(&base, 3);
    let err = backend.complete("hello", &params(), 0).await.unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)));
}

#[tokio::test]
async fn empty_choices_is_malformed() {
    let state = ServerState::default();
    *state.static_body.lock().unwrap() = Some(json!({"choices": []}));
    let base = spawn_server(state.clone()).await;
    let backend = fast_retry(&base, 3);
    let err = backend.complete("hello", &params(), 0).await.unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)));
}

#[tokio::test]
async fn connection_refused_exhausts_as_transient() {
    // Bind-then-drop to get a port nothing listens on.
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let backend = fast_retry(&format!("http://{addr}"), 2);
    let err = backend.complete("hello", &params(), 0).await.unwrap_err();
    assert!(
        matches!(err, BackendError::RateLimitExhausted { attempts: 2, .. }),
        "got {err:?}"
    );
}

#[tokio::test]
async fn cached_http_backend_hits_the_network_once() {
    let state = ServerState::default();
    let base = spawn_server(state.clone()).await;
    let dir = tempfile::tempdir().unwrap();
    let backend = CachedBackend::new(
        fast_retry(&base, 3),
        DiskCache::new(dir.path()).unwrap(),
    );
    let first = backend.complete("same prompt", &params(), 0).await.unwrap();
    let second = backend.complete("same prompt", &params(), 0).await.unwrap();
    assert_eq!(first, second);
    assert_eq!(state.hits.load(Ordering::SeqCst), 1);

    // A different attempt index is a different sample: fetched anew.
    backend.complete("same prompt", &params(), 1).await.unwrap();
    assert_eq!(state.hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn cache_survives_process_style_reopen() {
    let state = ServerState::default();
    let base = spawn_server(state.clone()).await;
    let dir = tempfile::tempdir().unwrap();
    {
        let backend = CachedBackend::new(
            fast_retry(&base, 3),
            DiskCache::new(dir.path()).unwrap(),
        );
        backend.complete("persisted", &params(), 0).await.unwrap();
    }
    // Fresh wrapper over the same directory: still served from disk.
    let backend = CachedBackend::new(
        fast_retry(&base, 3),
        DiskCache::new(dir.path()).unwrap(),
    );
    let out = backend.complete("persisted", &params(), 0).await.unwrap();
    assert_eq!(out, "echo:persisted");
    assert_eq!(state.hits.load(Ordering::SeqCst), 1);
}
