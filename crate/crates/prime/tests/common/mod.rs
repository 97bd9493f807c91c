#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use prime::server::{router, AppState, ServerConfig};
use prime_core::synth::{generate, write_fixtures, SynthOptions};
use prime_core::workflow::{InputPaths, Inputs};

pub fn small_opts() -> SynthOptions {
    SynthOptions {
        regions: 40,
        start_year: 2004,
        end_year: 2010,
        seed: 5,
        missing_fraction: 0.02,
    }
}

pub fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(&generate(&small_opts()).unwrap(), dir.path()).unwrap();
    dir
}

pub fn app_for(dir: &Path, config: ServerConfig) -> Router {
    let inputs = Inputs::load(&InputPaths::in_dir(dir)).unwrap();
    router(AppState::new(inputs, config))
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn call_json(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&bytes)))
    };
    (status, value)
}

pub async fn new_session(app: &Router) -> String {
    let (status, body) = call_json(app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_owned()
}

/// Polls `/results` until it stops answering 202.
pub async fn wait_results(app: &Router, id: &str) -> (StatusCode, Value) {
    for _ in 0..6000 {
        let (status, body) = call_json(app, "GET", &format!("/sessions/{id}/results"), None).await;
        if status != StatusCode::ACCEPTED {
            return (status, body);
        }
        tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    }
    panic!("training did not finish");
}
