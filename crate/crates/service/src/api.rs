//! HTTP API over a data directory.
//!
//! Layout under `data_dir`:
//!
//! ```text
//! images/<image_id>.{jpg,jpeg,png}     served assets
//! sessions/<session_id>.json           session records
//! uploads/<session_id>/<image_id>/     events.jsonl and audio.wav until finalize
//! store/<annotator>/<image>/           finalized main-mode sessions and labelings
//! training/<session_id>/               finalized training sessions and graded records
//! ```

use crate::config::{Resources, ServiceConfig};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use speaklabel_core::metrics::{ReportOptions, TrainingEvidence};
use speaklabel_core::pipeline::{process_dirs, process_image};
use speaklabel_core::session::{
    parse_event_log, write_atomic, AudioRef, ImageSession, SessionError, SessionMeta, SessionMode, SessionStore,
    AUDIO_FILE, EVENTS_FILE,
};
use speaklabel_core::trainer::{Feedback, TrainingImageRecord, TrainingRound, TypedEntry};
use speaklabel_core::Vocabulary;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

/// Recordings may end this much before the last event; the gap is padded
/// with silence.
pub const AUDIO_TOLERANCE_S: f64 = 0.1;
pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

const EVENT_TYPES: &[&str] = &["application/x-ndjson", "application/jsonl"];
const AUDIO_TYPES: &[&str] = &["audio/wav", "audio/x-wav", "audio/wave", "audio/vnd.wave"];

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<Reason>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
                reasons: Vec::new(),
            },
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        log::error!("{message}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message.to_string())
    }

    fn unprocessable(code: &str, message: impl Into<String>, reasons: Vec<Reason>) -> Self {
        let mut e = Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message);
        e.body.reasons = reasons;
        e
    }

    fn from_session(e: SessionError) -> Self {
        let reason = match &e {
            SessionError::Parse { line, message } => Reason {
                code: "malformed_event".into(),
                message: message.clone(),
                line: Some(*line),
            },
            SessionError::InvalidEvent { line, reason } => Reason {
                code: "invalid_event".into(),
                message: reason.clone(),
                line: Some(*line),
            },
            SessionError::InvalidLog(m) => Reason {
                code: "invalid_log".into(),
                message: m.clone(),
                line: None,
            },
            SessionError::Audio(m) => Reason {
                code: "invalid_audio".into(),
                message: m.clone(),
                line: None,
            },
            _ => return Self::internal(e),
        };
        Self::unprocessable("validation_failed", e.to_string(), vec![reason])
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

// ---------------------------------------------------------------------------
// State

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub annotator_id: String,
    pub mode: SessionMode,
    pub vocabulary_id: String,
    #[serde(default)]
    pub finalized: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDescriptor {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub vocabulary_id: String,
    pub url: String,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub resources: Resources,
    records: Mutex<()>,
    finalize_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    report_cache: Mutex<HashMap<String, (String, Bytes)>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, resources: Resources) -> std::io::Result<Self> {
        for sub in ["images", "sessions", "uploads", "store", "training"] {
            std::fs::create_dir_all(config.data_dir.join(sub))?;
        }
        Ok(Self {
            config,
            resources,
            records: Mutex::new(()),
            finalize_locks: Mutex::new(HashMap::new()),
            report_cache: Mutex::new(HashMap::new()),
        })
    }

    fn dir(&self, sub: &str) -> PathBuf {
        self.config.data_dir.join(sub)
    }

    pub fn store(&self) -> SessionStore {
        SessionStore::new(self.dir("store"))
    }

    fn record_path(&self, session_id: &str) -> PathBuf {
        self.dir("sessions").join(format!("{session_id}.json"))
    }

    fn load_record(&self, session_id: &str) -> ApiResult<SessionRecord> {
        check_id(session_id)?;
        let text = std::fs::read(self.record_path(session_id))
            .map_err(|_| ApiError::not_found(format!("session {session_id}")))?;
        serde_json::from_slice(&text).map_err(ApiError::internal)
    }

    fn save_record(&self, record: &SessionRecord) -> ApiResult<()> {
        let bytes = serde_json::to_vec_pretty(record).expect("record serializes");
        write_atomic(&self.record_path(&record.session_id), &bytes).map_err(ApiError::internal)
    }

    fn vocabulary(&self, id: &str) -> ApiResult<Arc<Vocabulary>> {
        self.resources
            .vocabularies
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("vocabulary {id}")))
    }

    /// First vocabulary with an image pool.
    fn default_vocabulary(&self) -> Option<String> {
        self.resources.ground_truth.keys().next().cloned()
    }

    fn descriptor(&self, vocabulary_id: &str, image_id: &str) -> ApiResult<ImageDescriptor> {
        let gt = self
            .resources
            .ground_truth
            .get(vocabulary_id)
            .and_then(|g| g.get(image_id))
            .ok_or_else(|| ApiError::not_found(format!("image {image_id} in vocabulary {vocabulary_id}")))?;
        Ok(ImageDescriptor {
            image_id: image_id.to_string(),
            width: gt.width,
            height: gt.height,
            vocabulary_id: vocabulary_id.to_string(),
            url: format!("/images/{image_id}"),
        })
    }

    fn next_image(&self, record: &SessionRecord) -> Option<ImageDescriptor> {
        let gt = self.resources.ground_truth.get(&record.vocabulary_id)?;
        let id = gt.images.keys().find(|id| !record.finalized.contains(id))?;
        self.descriptor(&record.vocabulary_id, id).ok()
    }

    fn upload_dir(&self, session_id: &str, image_id: &str) -> PathBuf {
        self.dir("uploads").join(session_id).join(image_id)
    }

    fn training_dir(&self, session_id: &str) -> PathBuf {
        self.dir("training").join(session_id)
    }

    fn training_records(&self, session_id: &str) -> ApiResult<Vec<TrainingImageRecord>> {
        match std::fs::read(self.training_dir(session_id).join("records.json")) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(ApiError::internal),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(ApiError::internal(e)),
        }
    }

    fn finalize_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.finalize_locks
            .lock()
            .expect("lock map poisoned")
            .entry(key.to_string())
            .or_default()
            .clone()
    }
}

fn check_id(id: &str) -> ApiResult<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ApiError::unprocessable(
            "invalid_id",
            format!("identifier {id:?} must be 1-128 characters of [A-Za-z0-9._-]"),
            Vec::new(),
        ))
    }
}

fn require_content_type(headers: &HeaderMap, allowed: &[&str]) -> ApiResult<()> {
    let value = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    let mime = value.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    if allowed.contains(&mime.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "unsupported_media_type",
            format!("content type {value:?} not accepted; expected one of {allowed:?}"),
        ))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

fn json_bytes(status: StatusCode, bytes: impl Into<Bytes>) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], bytes.into()).into_response()
}

// ---------------------------------------------------------------------------
// Router

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/images/{id}", get(get_image))
        .route("/vocabulary/{id}", get(get_vocabulary))
        .route("/sessions/{id}/images/{image_id}/events", post(upload_events))
        .route("/sessions/{id}/images/{image_id}/audio", post(upload_audio))
        .route("/sessions/{id}/images/{image_id}/finalize", post(finalize))
        .route("/sessions/{id}/training/summary", get(training_summary))
        .route("/reports/corpus", get(corpus_report))
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

async fn authorize(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.config.token {
        let given = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(request).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub annotator_id: String,
    pub mode: SessionMode,
    #[serde(default)]
    pub vocabulary_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub record: SessionRecord,
    pub image: Option<ImageDescriptor>,
}

async fn create_session(State(state): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> ApiResult<Response> {
    check_id(&req.annotator_id)?;
    let vocabulary_id = req
        .vocabulary_id
        .or_else(|| state.default_vocabulary())
        .ok_or_else(|| ApiError::unprocessable("no_images", "no vocabulary has an image pool", Vec::new()))?;
    state.vocabulary(&vocabulary_id)?;
    if !state.resources.ground_truth.contains_key(&vocabulary_id) {
        return Err(ApiError::unprocessable(
            "no_images",
            format!("vocabulary {vocabulary_id} has no image pool"),
            Vec::new(),
        ));
    }
    let record = {
        let _guard = state.records.lock().expect("record lock poisoned");
        let mode = match req.mode {
            SessionMode::Main => "main",
            SessionMode::Training => "training",
        };
        let n = (1..)
            .find(|n| !state.record_path(&format!("{}-{mode}-{n:04}", req.annotator_id)).exists())
            .expect("unbounded range");
        let record = SessionRecord {
            session_id: format!("{}-{mode}-{n:04}", req.annotator_id),
            annotator_id: req.annotator_id,
            mode: req.mode,
            vocabulary_id,
            finalized: Vec::new(),
        };
        state.save_record(&record)?;
        record
    };
    let image = state.next_image(&record);
    Ok((StatusCode::CREATED, Json(SessionView { record, image })).into_response())
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionView>> {
    let record = state.load_record(&id)?;
    let image = state.next_image(&record);
    Ok(Json(SessionView { record, image }))
}

async fn get_image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    check_id(&id)?;
    for (ext, mime) in [("jpg", "image/jpeg"), ("jpeg", "image/jpeg"), ("png", "image/png")] {
        let path = state.dir("images").join(format!("{id}.{ext}"));
        if let Ok(bytes) = tokio::fs::read(&path).await {
            return Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response());
        }
    }
    Err(ApiError::not_found(format!("image {id}")))
}

async fn get_vocabulary(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let vocab = state.vocabulary(&id)?;
    Ok(Json(vocab.to_file()).into_response())
}

fn upload_target(state: &AppState, id: &str, image_id: &str) -> ApiResult<(SessionRecord, PathBuf)> {
    let record = state.load_record(id)?;
    check_id(image_id)?;
    state.descriptor(&record.vocabulary_id, image_id)?;
    Ok((record, state.upload_dir(id, image_id)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub session_id: String,
    pub image_id: String,
    pub bytes: usize,
}

async fn store_upload(dir: PathBuf, file: &'static str, body: Bytes) -> ApiResult<()> {
    blocking(move || {
        std::fs::create_dir_all(&dir).map_err(ApiError::internal)?;
        write_atomic(&dir.join(file), &body).map_err(ApiError::internal)
    })
    .await
}

async fn upload_events(
    State(state): State<Arc<AppState>>,
    UrlPath((id, image_id)): UrlPath<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    require_content_type(&headers, EVENT_TYPES)?;
    let (_, dir) = upload_target(&state, &id, &image_id)?;
    let bytes = body.len();
    store_upload(dir, EVENTS_FILE, body).await?;
    Ok((StatusCode::ACCEPTED, Json(Accepted { session_id: id, image_id, bytes })).into_response())
}

async fn upload_audio(
    State(state): State<Arc<AppState>>,
    UrlPath((id, image_id)): UrlPath<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    require_content_type(&headers, AUDIO_TYPES)?;
    let (_, dir) = upload_target(&state, &id, &image_id)?;
    AudioRef::from_wav_bytes(&body).map_err(|e| {
        ApiError::unprocessable(
            "invalid_audio",
            e.to_string(),
            vec![Reason {
                code: "audio_format".into(),
                message: "expected a 16-bit linear PCM mono WAV file".into(),
                line: None,
            }],
        )
    })?;
    let bytes = body.len();
    store_upload(dir, AUDIO_FILE, body).await?;
    Ok((StatusCode::ACCEPTED, Json(Accepted { session_id: id, image_id, bytes })).into_response())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalizeRequest {
    #[serde(default)]
    pub typed: Option<Vec<TypedEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingFinalized {
    pub feedback: Feedback,
    pub round_index: usize,
    pub images_in_round: usize,
    pub round_complete: bool,
    pub next_image: Option<ImageDescriptor>,
}

/// Pads a recording that ends at most [`AUDIO_TOLERANCE_S`] before `until_s`.
fn pad_audio(audio: AudioRef, until_s: f64) -> ApiResult<AudioRef> {
    if audio.duration_s() >= until_s || audio.duration_s() + AUDIO_TOLERANCE_S < until_s {
        return Ok(audio);
    }
    let rate = audio.sample_rate();
    let needed = (until_s * f64::from(rate)).ceil() as usize;
    let mut samples = audio.samples().to_vec();
    samples.resize(needed.max(samples.len()), 0);
    AudioRef::new(rate, samples).map_err(ApiError::from_session)
}

fn load_uploads(state: &AppState, record: &SessionRecord, image_id: &str) -> ApiResult<ImageSession> {
    let dir = state.upload_dir(&record.session_id, image_id);
    let missing: Vec<&str> = [(EVENTS_FILE, "events"), (AUDIO_FILE, "audio")]
        .iter()
        .filter(|(f, _)| !dir.join(f).is_file())
        .map(|(_, name)| *name)
        .collect();
    if !missing.is_empty() {
        let mut e = ApiError::new(
            StatusCode::CONFLICT,
            "missing_upload",
            format!("finalize needs both uploads; missing {}", missing.join(" and ")),
        );
        e.body.reasons = missing
            .iter()
            .map(|m| Reason {
                code: format!("missing_{m}"),
                message: format!("no {m} uploaded"),
                line: None,
            })
            .collect();
        return Err(e);
    }
    let descriptor = state.descriptor(&record.vocabulary_id, image_id)?;
    let text = std::fs::read(dir.join(EVENTS_FILE)).map_err(ApiError::internal)?;
    let text = String::from_utf8(text)
        .map_err(|_| ApiError::unprocessable("validation_failed", "event log is not UTF-8", Vec::new()))?;
    let events = parse_event_log(&text, Some((descriptor.width, descriptor.height))).map_err(ApiError::from_session)?;
    let audio = AudioRef::from_wav_bytes(&std::fs::read(dir.join(AUDIO_FILE)).map_err(ApiError::internal)?)
        .map_err(ApiError::from_session)?;
    let audio = pad_audio(audio, events.last().map_or(0.0, |e| e.t))?;
    let meta = SessionMeta {
        image_id: image_id.to_string(),
        image_width: descriptor.width,
        image_height: descriptor.height,
        vocabulary_id: record.vocabulary_id.clone(),
        annotator_id: record.annotator_id.clone(),
        mode: record.mode,
    };
    ImageSession::new(meta, events, audio).map_err(ApiError::from_session)
}

async fn finalize(
    State(state): State<Arc<AppState>>,
    UrlPath((id, image_id)): UrlPath<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let request: FinalizeRequest = if body.iter().all(u8::is_ascii_whitespace) {
        FinalizeRequest::default()
    } else {
        require_content_type(&headers, &["application/json"])?;
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::unprocessable("invalid_body", e.to_string(), Vec::new()))?
    };
    let record = state.load_record(&id)?;
    check_id(&image_id)?;
    state.descriptor(&record.vocabulary_id, &image_id)?;
    let typed = request.typed.unwrap_or_default();
    match record.mode {
        SessionMode::Training if typed.is_empty() => {
            return Err(ApiError::unprocessable(
                "typed_entries_required",
                "training finalize needs the typed class names",
                Vec::new(),
            ))
        }
        SessionMode::Main if !typed.is_empty() => {
            return Err(ApiError::unprocessable(
                "typed_entries_forbidden",
                "main-mode finalize takes no typed entries",
                Vec::new(),
            ))
        }
        _ => {}
    }
    let lock = state.finalize_lock(&format!("{id}/{image_id}"));
    let state2 = state.clone();
    blocking(move || {
        let _guard = lock.lock().expect("finalize lock poisoned");
        let record = state2.load_record(&id)?;
        if record.mode == SessionMode::Training && record.finalized.contains(&image_id) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "already_finalized",
                format!("training image {image_id} was already graded in session {id}"),
            ));
        }
        let session = load_uploads(&state2, &record, &image_id)?;
        let vocab = state2.vocabulary(&record.vocabulary_id)?;
        let res = &state2.resources;
        let labeling = process_image(
            &session,
            &vocab,
            res.asr.as_ref(),
            &res.embeddings,
            &state2.config.pipeline_config(),
        )
        .map_err(|e| ApiError::unprocessable("pipeline_failed", e.to_string(), Vec::new()))?;
        let response = match record.mode {
            SessionMode::Main => {
                let dir = state2.store().dir_for(&session.meta);
                SessionStore::write(&dir, &session).map_err(ApiError::internal)?;
                labeling.write(&dir).map_err(ApiError::internal)?;
                json_bytes(StatusCode::OK, labeling.output_json())
            }
            SessionMode::Training => {
                let tdir = state2.training_dir(&id);
                SessionStore::write(&SessionStore::new(tdir.join("store")).dir_for(&session.meta), &session)
                    .map_err(ApiError::internal)?;
                let gt = res
                    .ground_truth
                    .get(&record.vocabulary_id)
                    .and_then(|g| g.get(&image_id))
                    .map(|g| g.class_set())
                    .unwrap_or_default();
                let config = state2.config.training_config(&record.vocabulary_id);
                let mut records = state2.training_records(&id)?;
                let per_round = config.images_per_round;
                let round_index = records.len() / per_round;
                let current = records[round_index * per_round..].to_vec();
                let mut round = TrainingRound::from_records(&record.annotator_id, round_index, config, current)
                    .map_err(ApiError::internal)?;
                let spoken = labeling.annotations.iter().map(|a| a.transcription.clone()).collect();
                let feedback = round.add_image(&image_id, typed, spoken, &gt, &vocab);
                records.push(round.records().last().expect("just added").clone());
                let bytes = serde_json::to_vec_pretty(&records).expect("records serialize");
                write_atomic(&tdir.join("records.json"), &bytes).map_err(ApiError::internal)?;
                let mut view = TrainingFinalized {
                    feedback,
                    round_index,
                    images_in_round: round.records().len(),
                    round_complete: round.is_complete(),
                    next_image: None,
                };
                let record = mark_finalized(&state2, &id, &image_id)?;
                view.next_image = state2.next_image(&record);
                return Ok(Json(view).into_response());
            }
        };
        mark_finalized(&state2, &id, &image_id)?;
        Ok(response)
    })
    .await
}

fn mark_finalized(state: &AppState, id: &str, image_id: &str) -> ApiResult<SessionRecord> {
    let _guard = state.records.lock().expect("record lock poisoned");
    let mut record = state.load_record(id)?;
    if !record.finalized.iter().any(|f| f == image_id) {
        record.finalized.push(image_id.to_string());
        state.save_record(&record)?;
    }
    Ok(record)
}

async fn training_summary(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let record = state.load_record(&id)?;
    if record.mode != SessionMode::Training {
        return Err(ApiError::new(StatusCode::CONFLICT, "not_training", format!("session {id} is not a training session")));
    }
    let records = state.training_records(&id)?;
    let config = state.config.training_config(&record.vocabulary_id);
    let per_round = config.images_per_round;
    let complete = records.len() / per_round;
    if complete == 0 {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "round_incomplete",
            format!("{} of {per_round} images graded", records.len()),
        ));
    }
    let index = complete - 1;
    let round = TrainingRound::from_records(
        &record.annotator_id,
        index,
        config,
        records[index * per_round..complete * per_round].to_vec(),
    )
    .map_err(ApiError::internal)?;
    Ok(Json(round.summary().map_err(ApiError::internal)?).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub vocabulary_id: Option<String>,
}

/// Hash over file names and contents below `root`, in path order.
pub fn content_hash(root: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    if root.exists() {
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(std::io::Error::other)?;
            if entry.file_type().is_file() {
                let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
                hasher.update(rel.to_string_lossy().as_bytes());
                hasher.update([0]);
                hasher.update(std::fs::read(entry.path())?);
                hasher.update([0]);
            }
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

fn compute_report(state: &AppState, vocabulary_id: &str) -> ApiResult<Bytes> {
    let vocab = state.vocabulary(vocabulary_id)?;
    let gt = state
        .resources
        .ground_truth
        .get(vocabulary_id)
        .ok_or_else(|| ApiError::not_found(format!("ground truth for {vocabulary_id}")))?;
    let store = state.store();
    let dirs: Vec<PathBuf> = store
        .session_dirs()
        .map_err(ApiError::internal)?
        .into_iter()
        .filter(|d| SessionStore::load_meta(d).is_ok_and(|m| m.vocabulary_id == vocabulary_id))
        .collect();
    let res = &state.resources;
    let run = process_dirs(&dirs, &vocab, res.asr.as_ref(), &res.embeddings, &state.config.pipeline_config(), false);
    let mut records = Vec::new();
    for entry in std::fs::read_dir(state.dir("sessions")).map_err(ApiError::internal)? {
        let path = entry.map_err(ApiError::internal)?.path();
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let record = state.load_record(id)?;
        if record.mode == SessionMode::Training && record.vocabulary_id == vocabulary_id {
            records.extend(state.training_records(id)?);
        }
    }
    let training = if state.config.asr.phrase_hints {
        TrainingEvidence {
            with_hints: records,
            without_hints: Vec::new(),
        }
    } else {
        TrainingEvidence {
            with_hints: Vec::new(),
            without_hints: records,
        }
    };
    let report = run.report(gt, &training, &vocab, &ReportOptions::default());
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    Ok(bytes.into())
}

async fn corpus_report(State(state): State<Arc<AppState>>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let vocabulary_id = q
        .vocabulary_id
        .or_else(|| state.default_vocabulary())
        .ok_or_else(|| ApiError::not_found("no vocabulary has ground truth"))?;
    state.vocabulary(&vocabulary_id)?;
    let state2 = state.clone();
    let bytes = blocking(move || {
        let hash = format!(
            "{}:{}",
            content_hash(&state2.dir("store")).map_err(ApiError::internal)?,
            content_hash(&state2.dir("training")).map_err(ApiError::internal)?
        );
        if let Some((h, bytes)) = state2.report_cache.lock().expect("cache poisoned").get(&vocabulary_id) {
            if *h == hash {
                return Ok(bytes.clone());
            }
        }
        let bytes = compute_report(&state2, &vocabulary_id)?;
        state2
            .report_cache
            .lock()
            .expect("cache poisoned")
            .insert(vocabulary_id, (hash, bytes.clone()));
        Ok(bytes)
    })
    .await?;
    Ok(json_bytes(StatusCode::OK, bytes))
}

/// Binds `config.listen` and serves until interrupted.
pub async fn serve(state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&state.config.listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
