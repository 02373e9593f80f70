mod common;

use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use speaklabel_core::asr::{
    transcribe_with_retry, AsrConfig, AsrError, AsrGateway, BatchOptions, RemoteAsr, RemoteSettings, SegmentRef,
    SegmentRequest,
};
use speaklabel_core::AudioRef;
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// Scripted provider: answers with the queued statuses, then succeeds.
#[derive(Default)]
struct Provider {
    failures: Mutex<Vec<u16>>,
    seen: Mutex<Vec<(Option<String>, Value)>>,
    delay: Option<Duration>,
}

async fn handle(provider: Arc<Provider>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string);
    provider.seen.lock().unwrap().push((auth, body));
    if let Some(d) = provider.delay {
        tokio::time::sleep(d).await;
    }
    let next = {
        let mut f = provider.failures.lock().unwrap();
        (!f.is_empty()).then(|| f.remove(0))
    };
    match next {
        Some(code) => (StatusCode::from_u16(code).unwrap(), "nope").into_response(),
        None => Json(json!({
            "alternatives": [
                {"text": "dog", "confidence": 0.9},
                {"text": "dock"},
                {"text": "doug"},
                {"text": "dug"}
            ],
            "speech": [{"start_s": 0.1, "end_s": 0.6}]
        }))
        .into_response(),
    }
}

fn start(provider: Arc<Provider>) -> (tokio::runtime::Runtime, String) {
    let rt = common::runtime();
    let app = Router::new().route("/recognize", post(move |h, b| handle(provider.clone(), h, b)));
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, app).await });
    (rt, format!("http://{addr}/recognize"))
}

fn segment() -> SegmentRequest {
    SegmentRequest {
        segment_ref: SegmentRef {
            session: "ann1/img000".into(),
            object_index: 2,
        },
        audio: AudioRef::new(16000, vec![100; 1600]).unwrap(),
    }
}

fn asr_config() -> AsrConfig {
    AsrConfig {
        phrase_hints: vec!["dog".into(), "cat".into()],
        max_alternatives: 3,
        ..AsrConfig::default()
    }
}

fn retries(n: usize) -> BatchOptions {
    BatchOptions {
        max_attempts: n,
        ..BatchOptions::default()
    }
}

#[test]
fn request_shape_and_response_mapping() {
    let provider = Arc::new(Provider::default());
    let (_rt, endpoint) = start(provider.clone());
    let remote = RemoteAsr::new(RemoteSettings {
        credential: Some("tok".into()),
        language_tag: "en-GB".into(),
        ..RemoteSettings::new(&endpoint)
    })
    .unwrap();
    let config = AsrConfig {
        language_tag: "en-GB".into(),
        ..asr_config()
    };
    let r = remote.transcribe(&segment(), &config).unwrap();
    let texts: Vec<_> = r.alternatives.iter().map(|a| (a.text.as_str(), a.rank)).collect();
    assert_eq!(texts, [("dog", 1), ("dock", 2), ("doug", 3)]);
    assert_eq!(r.alternatives[0].confidence, Some(0.9));
    assert_eq!(r.speech.len(), 1);
    assert_eq!(r.segment_ref.object_index, 2);

    let seen = provider.seen.lock().unwrap();
    let (auth, body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer tok"));
    assert_eq!(body["language_tag"], "en-GB");
    assert_eq!(body["phrase_hints"], json!(["dog", "cat"]));
    assert_eq!(body["max_alternatives"], 3);
    assert_eq!(body["encoding"], "LINEAR16");
    assert_eq!(body["sample_rate_hz"], 16000);
    assert!(body["audio_base64"].as_str().unwrap().starts_with("UklGR"));
}

#[test]
fn server_errors_are_retried() {
    let provider = Arc::new(Provider {
        failures: Mutex::new(vec![503, 429]),
        ..Provider::default()
    });
    let (_rt, endpoint) = start(provider.clone());
    let remote = RemoteAsr::new(RemoteSettings::new(&endpoint)).unwrap();
    let r = transcribe_with_retry(&remote, &segment(), &asr_config(), &retries(3));
    assert!(r.error.is_none());
    assert_eq!(r.alternatives[0].text, "dog");
    assert_eq!(provider.seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_run_out() {
    let provider = Arc::new(Provider {
        failures: Mutex::new(vec![500, 502, 503]),
        ..Provider::default()
    });
    let (_rt, endpoint) = start(provider.clone());
    let remote = RemoteAsr::new(RemoteSettings::new(&endpoint)).unwrap();
    let r = transcribe_with_retry(&remote, &segment(), &asr_config(), &retries(2));
    assert!(r.error.is_some());
    assert!(r.alternatives.is_empty());
    assert_eq!(provider.seen.lock().unwrap().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let provider = Arc::new(Provider {
        failures: Mutex::new(vec![401]),
        ..Provider::default()
    });
    let (_rt, endpoint) = start(provider.clone());
    let remote = RemoteAsr::new(RemoteSettings::new(&endpoint)).unwrap();
    assert!(matches!(remote.transcribe(&segment(), &asr_config()), Err(AsrError::Config(_))));
    provider.failures.lock().unwrap().push(400);
    let r = transcribe_with_retry(&remote, &segment(), &asr_config(), &retries(3));
    assert!(r.error.is_some());
    assert_eq!(provider.seen.lock().unwrap().len(), 2);
}

#[test]
fn timeouts_and_refused_connections_are_transport_errors() {
    let provider = Arc::new(Provider {
        delay: Some(Duration::from_millis(800)),
        ..Provider::default()
    });
    let (_rt, endpoint) = start(provider);
    let remote = RemoteAsr::new(RemoteSettings {
        timeout_s: 0.2,
        ..RemoteSettings::new(&endpoint)
    })
    .unwrap();
    let e = remote.transcribe(&segment(), &asr_config()).unwrap_err();
    assert!(e.is_retryable(), "{e}");

    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = closed.local_addr().unwrap();
    drop(closed);
    let remote = RemoteAsr::new(RemoteSettings::new(&format!("http://{addr}/"))).unwrap();
    assert!(matches!(remote.transcribe(&segment(), &asr_config()), Err(AsrError::Transport(_))));
}
