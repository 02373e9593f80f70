mod common;

use axum::body::Body;
use axum::http::StatusCode;
use common::{call, create_session, finalize, json, request, upload};
use serde_json::json;
use speaklabel::config::ServiceConfig;
use speaklabel_core::synth::{replay_corpus, WriteOptions, WrittenCorpus};
use speaklabel_core::AudioRef;
use std::path::{Path, PathBuf};
use tempfile::TempDir;

struct Setup {
    _tmp: TempDir,
    corpus: WrittenCorpus,
    data: PathBuf,
}

fn setup(images: usize) -> Setup {
    let tmp = tempfile::tempdir().unwrap();
    let coco = common::coco();
    let corpus = replay_corpus(&coco, images)
        .write(&tmp.path().join("corpus"), &coco, &WriteOptions::default())
        .unwrap();
    let data = tmp.path().join("data");
    Setup { _tmp: tmp, corpus, data }
}

impl Setup {
    fn config(&self) -> ServiceConfig {
        common::service_config(&self.data, Some(&self.corpus.gt), &self.corpus.asr_fixture)
    }

    fn session_dir(&self, image_index: usize) -> PathBuf {
        self.corpus
            .store
            .join(format!("ann{}", image_index % 5 + 1))
            .join(format!("img{image_index:03}"))
    }
}

fn typed(names: &[&str]) -> serde_json::Value {
    let entries: Vec<_> = names
        .iter()
        .enumerate()
        .map(|(k, n)| json!({ "text": n, "x": 10.0 * k as f64, "y": 20.0, "t": 1.0 + k as f64 }))
        .collect();
    json!({ "typed": entries })
}

fn shortened_audio(dir: &Path, by_s: f64) -> Vec<u8> {
    let events = std::fs::read_to_string(dir.join("events.jsonl")).unwrap();
    let last_t = events
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["t"].as_f64().unwrap())
        .fold(0.0, f64::max);
    let audio = AudioRef::from_wav_bytes(&std::fs::read(dir.join("audio.wav")).unwrap()).unwrap();
    let keep = ((last_t - by_s) * f64::from(audio.sample_rate())) as usize;
    AudioRef::new(audio.sample_rate(), audio.samples()[..keep].to_vec())
        .unwrap()
        .to_wav_bytes()
}

#[tokio::test(flavor = "multi_thread")]
async fn main_session_round_trip() {
    let s = setup(3);
    let app = common::app(s.config());
    let body = json!({ "annotator_id": "ann1", "mode": "main" }).to_string();
    let (status, bytes) = call(&app, request("POST", "/sessions", Some("application/json"), body)).await;
    assert_eq!(status, StatusCode::CREATED);
    let view = json(&bytes);
    assert_eq!(view["session_id"], "ann1-main-0001");
    assert_eq!(view["vocabulary_id"], "coco80");
    assert_eq!(view["image"]["image_id"], "img000");
    assert_eq!(view["image"]["width"], 640);

    upload(&app, "ann1-main-0001", "img000", &s.session_dir(0)).await;
    let (status, bytes) = finalize(&app, "ann1-main-0001", "img000", None).await;
    assert_eq!(status, StatusCode::OK);
    let stored = s.data.join("store/ann1/img000");
    assert_eq!(bytes, std::fs::read(stored.join("labeling.json")).unwrap());
    assert!(stored.join("annotations.json").is_file() && stored.join("audio.wav").is_file());
    let out = json(&bytes);
    assert_eq!(out["image_id"], "img000");
    assert_eq!(out["labels"][0]["class"], "person");
    assert_eq!(out["labels"][0]["method"], "exact");

    // main-mode re-finalize overwrites with the same result
    let (status, again) = finalize(&app, "ann1-main-0001", "img000", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, bytes);

    let (status, bytes) = call(&app, request("GET", "/sessions/ann1-main-0001", None, Body::empty())).await;
    assert_eq!(status, StatusCode::OK);
    let view = json(&bytes);
    assert_eq!(view["finalized"], json!(["img000"]));
    assert_eq!(view["image"]["image_id"], "img001");

    // a second session of the same annotator gets the next number
    assert_eq!(create_session(&app, "ann1", "main").await, "ann1-main-0002");
}

#[tokio::test(flavor = "multi_thread")]
async fn resources_and_not_found() {
    let s = setup(1);
    std::fs::create_dir_all(s.data.join("images")).unwrap();
    std::fs::write(s.data.join("images/img000.jpg"), b"\xff\xd8jpeg").unwrap();
    let app = common::app(s.config());

    let (status, bytes) = call(&app, request("GET", "/vocabulary/coco80", None, Body::empty())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&bytes)["classes"].as_array().unwrap().len(), 80);

    let (status, bytes) = call(&app, request("GET", "/images/img000", None, Body::empty())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, b"\xff\xd8jpeg");

    for uri in ["/images/img999", "/vocabulary/nope", "/sessions/nobody-main-0001"] {
        let (status, bytes) = call(&app, request("GET", uri, None, Body::empty())).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(json(&bytes)["error"], "not_found");
    }
    let (status, _) = call(&app, request("GET", "/images/..%2Fsecret", None, Body::empty())).await;
    assert!(status.is_client_error());
}

#[tokio::test(flavor = "multi_thread")]
async fn upload_validation() {
    let s = setup(1);
    let app = common::app(s.config());
    let id = create_session(&app, "ann1", "main").await;
    let base = format!("/sessions/{id}/images/img000");

    let (status, bytes) = call(&app, request("POST", &format!("{base}/events"), Some("text/plain"), "{}")).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(json(&bytes)["error"], "unsupported_media_type");

    let junk = b"RIFF\x10\0\0\0WAVEnot audio".to_vec();
    let (status, bytes) = call(&app, request("POST", &format!("{base}/audio"), Some("audio/wav"), junk)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json(&bytes)["reasons"][0]["code"], "audio_format");

    // unknown image for this vocabulary
    let (status, _) = call(
        &app,
        request("POST", &format!("/sessions/{id}/images/img777/events"), Some("application/jsonl"), "x"),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // finalize before both uploads arrived
    let events = std::fs::read(s.session_dir(0).join("events.jsonl")).unwrap();
    let (status, _) = call(&app, request("POST", &format!("{base}/events"), Some("application/x-ndjson"), events)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (status, bytes) = finalize(&app, &id, "img000", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let body = json(&bytes);
    assert_eq!(body["error"], "missing_upload");
    assert_eq!(body["reasons"][0]["code"], "missing_audio");

    let (status, bytes) = finalize(&app, &id, "img000", Some(typed(&["person"]))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json(&bytes)["error"], "typed_entries_forbidden");
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_event_log_reports_line() {
    let s = setup(1);
    let app = common::app(s.config());
    let id = create_session(&app, "ann1", "main").await;
    upload(&app, &id, "img000", &s.session_dir(0)).await;
    let mut events = std::fs::read_to_string(s.session_dir(0).join("events.jsonl")).unwrap();
    events.push_str("{\"kind\": \"click\", \"t\": \"soon\"}\n");
    let lines = events.lines().count();
    let uri = format!("/sessions/{id}/images/img000/events");
    call(&app, request("POST", &uri, Some("application/x-ndjson"), events)).await;
    let (status, bytes) = finalize(&app, &id, "img000", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let body = json(&bytes);
    assert_eq!(body["error"], "validation_failed");
    assert_eq!(body["reasons"][0]["line"], lines);
}

#[tokio::test(flavor = "multi_thread")]
async fn short_recordings_padded_within_tolerance() {
    let s = setup(1);
    let app = common::app(s.config());
    let id = create_session(&app, "ann1", "main").await;
    let dir = s.session_dir(0);
    upload(&app, &id, "img000", &dir).await;
    let audio_uri = format!("/sessions/{id}/images/img000/audio");

    call(&app, request("POST", &audio_uri, Some("audio/wav"), shortened_audio(&dir, 0.05))).await;
    let (status, _) = finalize(&app, &id, "img000", None).await;
    assert_eq!(status, StatusCode::OK);

    call(&app, request("POST", &audio_uri, Some("audio/wav"), shortened_audio(&dir, 0.5))).await;
    let (status, bytes) = finalize(&app, &id, "img000", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{}", String::from_utf8_lossy(&bytes));
}

#[tokio::test(flavor = "multi_thread")]
async fn training_feedback_and_summary() {
    let s = setup(4);
    let mut config = s.config();
    config.training.images_per_round = 2;
    let app = common::app(config);
    let id = create_session(&app, "ann1", "training").await;
    assert_eq!(id, "ann1-training-0001");

    let (status, bytes) = call(&app, request("GET", &format!("/sessions/{id}/training/summary"), None, Body::empty())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json(&bytes)["error"], "round_incomplete");

    upload(&app, &id, "img000", &s.session_dir(0)).await;
    let (status, bytes) = finalize(&app, &id, "img000", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json(&bytes)["error"], "typed_entries_required");

    // img000 shows only a person; the annotator typed dog
    let (status, bytes) = finalize(&app, &id, "img000", Some(typed(&["Dog"]))).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&bytes));
    let out = json(&bytes);
    assert_eq!(out["feedback"]["missed"], json!(["person"]));
    assert_eq!(out["feedback"]["wrong"], json!(["dog"]));
    assert_eq!(out["feedback"]["correct"], json!([]));
    assert_eq!(out["round_index"], 0);
    assert_eq!(out["images_in_round"], 1);
    assert_eq!(out["round_complete"], false);
    assert_eq!(out["next_image"]["image_id"], "img001");

    let (status, bytes) = finalize(&app, &id, "img000", Some(typed(&["person"]))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json(&bytes)["error"], "already_finalized");

    // img001 shows classes 7 and 20 of the vocabulary
    let coco = common::coco();
    let names: Vec<&str> = [7, 20].iter().map(|&k| coco.classes()[k].normalized()).collect();
    upload(&app, &id, "img001", &s.session_dir(1)).await;
    let (status, bytes) = finalize(&app, &id, "img001", Some(typed(&names))).await;
    assert_eq!(status, StatusCode::OK);
    let out = json(&bytes);
    assert_eq!(out["round_complete"], true);
    assert_eq!(out["feedback"]["missed"], json!([]));

    let (status, bytes) = call(&app, request("GET", &format!("/sessions/{id}/training/summary"), None, Body::empty())).await;
    assert_eq!(status, StatusCode::OK);
    let summary = json(&bytes);
    assert_eq!(summary["recall"], 2.0 / 3.0);
    assert_eq!(summary["precision"], 2.0 / 3.0);
    assert_eq!(summary["passed"], false);
    assert_eq!(summary["per_image"].as_array().unwrap().len(), 2);

    // main sessions have no training summary
    let main = create_session(&app, "ann2", "main").await;
    let (status, _) = call(&app, request("GET", &format!("/sessions/{main}/training/summary"), None, Body::empty())).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn corpus_report_follows_the_store() {
    let s = setup(3);
    let app = common::app(s.config());
    let report = |app| async move {
        let (status, bytes) = call(app, request("GET", "/reports/corpus?vocabulary_id=coco80", None, Body::empty())).await;
        assert_eq!(status, StatusCode::OK);
        bytes
    };
    let empty = report(&app).await;
    assert_eq!(json(&empty)["images"], 0);

    let id = create_session(&app, "ann1", "main").await;
    upload(&app, &id, "img000", &s.session_dir(0)).await;
    finalize(&app, &id, "img000", None).await;
    let one = report(&app).await;
    assert_eq!(json(&one)["images"], 1);
    assert_eq!(report(&app).await, one);

    upload(&app, &id, "img001", &s.session_dir(1)).await;
    finalize(&app, &id, "img001", None).await;
    let two = json(&report(&app).await);
    assert_eq!(two["images"], 2);
    assert_eq!(two["counts"]["ground_truth"], 3);

    let (status, _) = call(&app, request("GET", "/reports/corpus?vocabulary_id=nope", None, Body::empty())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn bearer_token_required_when_configured() {
    let s = setup(1);
    let mut config = s.config();
    config.token = Some("s3cret".into());
    let app = common::app(config);
    let body = json!({ "annotator_id": "ann1", "mode": "main" }).to_string();

    let (status, bytes) = call(&app, request("POST", "/sessions", Some("application/json"), body.clone())).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(json(&bytes)["error"], "unauthorized");

    let mut req = request("POST", "/sessions", Some("application/json"), body.clone());
    req.headers_mut().insert("authorization", "Bearer wrong".parse().unwrap());
    assert_eq!(call(&app, req).await.0, StatusCode::UNAUTHORIZED);

    let mut req = request("POST", "/sessions", Some("application/json"), body);
    req.headers_mut().insert("authorization", "Bearer s3cret".parse().unwrap());
    assert_eq!(call(&app, req).await.0, StatusCode::CREATED);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_session_requests() {
    let s = setup(1);
    let app = common::app(s.config());
    for body in [
        json!({ "annotator_id": "../x", "mode": "main" }),
        json!({ "annotator_id": "ann1", "mode": "main", "vocabulary_id": "ilsvrc200" }),
    ] {
        let (status, _) = call(&app, request("POST", "/sessions", Some("application/json"), body.to_string())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    }
    let (status, _) = call(&app, request("POST", "/sessions", Some("application/json"), "{\"mode\": 3}")).await;
    assert!(status.is_client_error());
}
