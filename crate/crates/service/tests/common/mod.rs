#![allow(dead_code)]

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use speaklabel::config::ServiceConfig;
use speaklabel::{router, AppState};
use speaklabel_core::{EmbeddingTable, Vocabulary};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn coco_path() -> PathBuf {
    fixtures().join("vocab/coco80.json")
}

pub fn ilsvrc_path() -> PathBuf {
    fixtures().join("vocab/ilsvrc200.json")
}

pub fn embeddings_path() -> PathBuf {
    fixtures().join("embeddings.txt")
}

pub fn coco() -> Vocabulary {
    Vocabulary::load(coco_path()).unwrap()
}

pub fn ilsvrc() -> Vocabulary {
    Vocabulary::load(ilsvrc_path()).unwrap()
}

pub fn embeddings() -> EmbeddingTable {
    EmbeddingTable::load(embeddings_path()).unwrap()
}

/// Mock-ASR service configuration with one image pool.
pub fn service_config(data_dir: &Path, gt: Option<&Path>, asr_fixture: &Path) -> ServiceConfig {
    let mut c = ServiceConfig {
        data_dir: data_dir.to_path_buf(),
        vocabularies: vec![coco_path(), ilsvrc_path()],
        embeddings: embeddings_path(),
        ..ServiceConfig::default()
    };
    if let Some(gt) = gt {
        c.ground_truth.insert("coco80".into(), gt.to_path_buf());
    }
    c.asr.fixture = Some(asr_fixture.to_path_buf());
    c
}

pub fn app(config: ServiceConfig) -> Router {
    let resources = config.load_resources().unwrap();
    router(Arc::new(AppState::new(config, resources).unwrap()))
}

pub fn request(method: &str, uri: &str, content_type: Option<&str>, body: impl Into<Body>) -> Request<Body> {
    let mut b = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        b = b.header(header::CONTENT_TYPE, ct);
    }
    b.body(body.into()).unwrap()
}

pub async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

pub async fn create_session(app: &Router, annotator: &str, mode: &str) -> String {
    let body = serde_json::json!({ "annotator_id": annotator, "mode": mode }).to_string();
    let (status, bytes) = call(app, request("POST", "/sessions", Some("application/json"), body)).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&bytes));
    json(&bytes)["session_id"].as_str().unwrap().to_string()
}

/// Uploads one store session folder's events and audio.
pub async fn upload(app: &Router, session: &str, image: &str, dir: &Path) {
    let events = std::fs::read(dir.join("events.jsonl")).unwrap();
    let audio = std::fs::read(dir.join("audio.wav")).unwrap();
    let base = format!("/sessions/{session}/images/{image}");
    let (s, b) = call(app, request("POST", &format!("{base}/events"), Some("application/x-ndjson"), events)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&b));
    let (s, b) = call(app, request("POST", &format!("{base}/audio"), Some("audio/wav"), audio)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&b));
}

pub async fn finalize(app: &Router, session: &str, image: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let uri = format!("/sessions/{session}/images/{image}/finalize");
    let req = match body {
        Some(v) => request("POST", &uri, Some("application/json"), v.to_string()),
        None => request("POST", &uri, None, Body::empty()),
    };
    call(app, req).await
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}
