//! Speech recognition over audio segments.
//!
//! [`AsrGateway`] is the provider-neutral contract. Two implementations ship:
//! [`MockAsr`], driven by a JSON fixture, and [`RemoteAsr`], which speaks a
//! generic HTTP speech-to-text protocol.

use crate::session::AudioRef;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

pub const DEFAULT_MAX_ALTERNATIVES: usize = 3;
pub const DEFAULT_LANGUAGE_TAG: &str = "en-IN";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AsrError {
    /// The request may succeed if retried.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The provider rejected the request; retrying will not help.
    #[error("configuration rejected: {0}")]
    Config(String),
}

impl AsrError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, AsrError::Transport(_))
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("failed to read ASR fixture: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed ASR fixture: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate ASR fixture key {0}")]
    DuplicateKey(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionAlternative {
    pub text: String,
    pub rank: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// Interval of detected speech, in seconds from the start of the segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechInterval {
    pub start_s: f64,
    pub end_s: f64,
}

impl SpeechInterval {
    pub fn length_s(&self) -> f64 {
        (self.end_s - self.start_s).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentRef {
    pub session: String,
    pub object_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum AsrFailure {
    Transport(String),
    Config(String),
}

impl From<AsrError> for AsrFailure {
    fn from(e: AsrError) -> Self {
        match e {
            AsrError::Transport(m) => AsrFailure::Transport(m),
            AsrError::Config(m) => AsrFailure::Config(m),
        }
    }
}

/// Ranked alternatives for one segment. Empty alternatives mean no speech.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionResult {
    pub segment_ref: SegmentRef,
    pub alternatives: Vec<TranscriptionAlternative>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub speech: Vec<SpeechInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<AsrFailure>,
}

impl TranscriptionResult {
    pub fn silent(segment_ref: SegmentRef) -> Self {
        Self {
            segment_ref,
            alternatives: Vec::new(),
            speech: Vec::new(),
            error: None,
        }
    }

    pub fn failed(segment_ref: SegmentRef, error: AsrError) -> Self {
        Self {
            error: Some(error.into()),
            ..Self::silent(segment_ref)
        }
    }

    /// Builds a result from texts in rank order.
    pub fn from_texts<S: AsRef<str>>(segment_ref: SegmentRef, texts: &[S]) -> Self {
        Self {
            alternatives: texts
                .iter()
                .enumerate()
                .map(|(i, t)| TranscriptionAlternative {
                    text: t.as_ref().to_string(),
                    rank: i as u32 + 1,
                    confidence: None,
                })
                .collect(),
            ..Self::silent(segment_ref)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrConfig {
    pub language_tag: String,
    pub phrase_hints: Vec<String>,
    pub max_alternatives: usize,
}

impl Default for AsrConfig {
    fn default() -> Self {
        Self {
            language_tag: DEFAULT_LANGUAGE_TAG.to_string(),
            phrase_hints: Vec::new(),
            max_alternatives: DEFAULT_MAX_ALTERNATIVES,
        }
    }
}

impl AsrConfig {
    fn check(&self) -> Result<(), AsrError> {
        if self.max_alternatives == 0 {
            return Err(AsrError::Config("max_alternatives must be at least 1".into()));
        }
        if self.language_tag.trim().is_empty() {
            return Err(AsrError::Config("empty language tag".into()));
        }
        Ok(())
    }
}

/// One segment submitted for transcription.
#[derive(Debug, Clone)]
pub struct SegmentRequest {
    pub segment_ref: SegmentRef,
    pub audio: AudioRef,
}

pub trait AsrGateway: Send + Sync {
    fn transcribe(&self, request: &SegmentRequest, config: &AsrConfig) -> Result<TranscriptionResult, AsrError>;
}

impl<G: AsrGateway + ?Sized> AsrGateway for std::sync::Arc<G> {
    fn transcribe(&self, request: &SegmentRequest, config: &AsrConfig) -> Result<TranscriptionResult, AsrError> {
        (**self).transcribe(request, config)
    }
}

impl<G: AsrGateway + ?Sized> AsrGateway for &G {
    fn transcribe(&self, request: &SegmentRequest, config: &AsrConfig) -> Result<TranscriptionResult, AsrError> {
        (**self).transcribe(request, config)
    }
}

/// Hex SHA-256 of the segment's canonical WAV encoding.
pub fn audio_sha256(audio: &AudioRef) -> String {
    hex::encode(Sha256::digest(audio.to_wav_bytes()))
}

#[derive(Debug, Clone, Copy)]
pub struct BatchOptions {
    pub parallelism: usize,
    pub max_attempts: usize,
    pub backoff: Duration,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            max_attempts: 3,
            backoff: Duration::ZERO,
        }
    }
}

/// Transcribes one request, retrying transport failures.
pub fn transcribe_with_retry(
    gateway: &dyn AsrGateway,
    request: &SegmentRequest,
    config: &AsrConfig,
    options: &BatchOptions,
) -> TranscriptionResult {
    let attempts = options.max_attempts.max(1);
    let mut last = None;
    for attempt in 0..attempts {
        match gateway.transcribe(request, config) {
            Ok(mut result) => {
                result.alternatives.truncate(config.max_alternatives);
                return result;
            }
            Err(e) if e.is_retryable() && attempt + 1 < attempts => {
                log::debug!("retrying {:?} after {e}", request.segment_ref);
                if !options.backoff.is_zero() {
                    std::thread::sleep(options.backoff * (attempt as u32 + 1));
                }
                last = Some(e);
            }
            Err(e) => {
                last = Some(e);
                break;
            }
        }
    }
    let err = last.expect("at least one attempt");
    log::warn!("transcription of {:?} failed: {err}", request.segment_ref);
    TranscriptionResult::failed(request.segment_ref.clone(), err)
}

/// Transcribes many segments; output order always matches input order and a
/// failing segment yields an error-marked result without stopping the batch.
pub fn batch_transcribe(
    gateway: &dyn AsrGateway,
    requests: &[SegmentRequest],
    config: &AsrConfig,
    options: &BatchOptions,
) -> Vec<TranscriptionResult> {
    use rayon::prelude::*;
    if options.parallelism <= 1 || requests.len() <= 1 {
        return requests
            .iter()
            .map(|r| transcribe_with_retry(gateway, r, config, options))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .expect("thread pool");
    pool.install(|| {
        requests
            .par_iter()
            .map(|r| transcribe_with_retry(gateway, r, config, options))
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Fixture-driven mock

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureAlternative {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureKey {
    Segment { session: String, object_index: usize },
    AudioHash { audio_sha256: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatedFailure {
    Transport,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub key: FixtureKey,
    #[serde(default)]
    pub with_hints: Vec<FixtureAlternative>,
    #[serde(default)]
    pub without_hints: Vec<FixtureAlternative>,
    /// Speech activity relative to the segment start.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub speech: Vec<SpeechInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<SimulatedFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    pub entries: Vec<FixtureEntry>,
}

/// Deterministic gateway answering from a fixture. Lookup is by
/// `(session, object_index)` first, then by audio hash; unknown segments
/// are silent.
#[derive(Debug, Clone, Default)]
pub struct MockAsr {
    by_segment: HashMap<SegmentRef, FixtureEntry>,
    by_hash: HashMap<String, FixtureEntry>,
}

impl MockAsr {
    pub fn new(fixture: MockFixture) -> Result<Self, FixtureError> {
        let mut mock = Self::default();
        for entry in fixture.entries {
            let dup = match &entry.key {
                FixtureKey::Segment { session, object_index } => mock
                    .by_segment
                    .insert(
                        SegmentRef {
                            session: session.clone(),
                            object_index: *object_index,
                        },
                        entry.clone(),
                    )
                    .is_some(),
                FixtureKey::AudioHash { audio_sha256 } => mock
                    .by_hash
                    .insert(audio_sha256.to_ascii_lowercase(), entry.clone())
                    .is_some(),
            };
            if dup {
                return Err(FixtureError::DuplicateKey(format!("{:?}", entry.key)));
            }
        }
        Ok(mock)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path)?;
        Self::new(serde_json::from_str(&text)?)
    }

    pub fn len(&self) -> usize {
        self.by_segment.len() + self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lookup(&self, request: &SegmentRequest) -> Option<&FixtureEntry> {
        self.by_segment.get(&request.segment_ref).or_else(|| {
            if self.by_hash.is_empty() {
                None
            } else {
                self.by_hash.get(&audio_sha256(&request.audio))
            }
        })
    }
}

impl AsrGateway for MockAsr {
    fn transcribe(&self, request: &SegmentRequest, config: &AsrConfig) -> Result<TranscriptionResult, AsrError> {
        config.check()?;
        let Some(entry) = self.lookup(request) else {
            return Ok(TranscriptionResult::silent(request.segment_ref.clone()));
        };
        match entry.fail {
            Some(SimulatedFailure::Transport) => {
                return Err(AsrError::Transport("simulated connection reset".into()));
            }
            Some(SimulatedFailure::Rejected) => {
                return Err(AsrError::Config("simulated provider rejection".into()));
            }
            None => {}
        }
        let source = if config.phrase_hints.is_empty() {
            &entry.without_hints
        } else {
            &entry.with_hints
        };
        let alternatives = source
            .iter()
            .take(config.max_alternatives)
            .enumerate()
            .map(|(i, a)| TranscriptionAlternative {
                text: a.text.clone(),
                rank: i as u32 + 1,
                confidence: a.confidence,
            })
            .collect::<Vec<_>>();
        let speech = if alternatives.is_empty() {
            Vec::new()
        } else {
            entry.speech.clone()
        };
        Ok(TranscriptionResult {
            segment_ref: request.segment_ref.clone(),
            alternatives,
            speech,
            error: None,
        })
    }
}

// ---------------------------------------------------------------------------
// HTTP adapter

/// Connection settings for a remote speech-to-text endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSettings {
    pub endpoint: String,
    #[serde(default)]
    pub credential: Option<String>,
    #[serde(default = "default_language")]
    pub language_tag: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_retry_count")]
    pub retry_count: usize,
}

fn default_language() -> String {
    DEFAULT_LANGUAGE_TAG.to_string()
}

fn default_timeout_s() -> f64 {
    30.0
}

fn default_retry_count() -> usize {
    3
}

impl RemoteSettings {
    pub fn new(endpoint: &str) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            credential: None,
            language_tag: default_language(),
            timeout_s: default_timeout_s(),
            retry_count: default_retry_count(),
        }
    }

    /// Applies `SPEAKLABEL_ASR_*` environment overrides.
    pub fn apply_env(&mut self) {
        self.apply_vars(|k| std::env::var(k).ok());
    }

    pub fn apply_vars(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("SPEAKLABEL_ASR_ENDPOINT") {
            self.endpoint = v;
        }
        if let Some(v) = get("SPEAKLABEL_ASR_TOKEN") {
            self.credential = Some(v);
        }
        if let Some(v) = get("SPEAKLABEL_ASR_LANGUAGE") {
            self.language_tag = v;
        }
        if let Some(v) = get("SPEAKLABEL_ASR_TIMEOUT_S").and_then(|v| v.parse().ok()) {
            self.timeout_s = v;
        }
        if let Some(v) = get("SPEAKLABEL_ASR_RETRIES").and_then(|v| v.parse().ok()) {
            self.retry_count = v;
        }
    }
}

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    language_tag: &'a str,
    phrase_hints: &'a [String],
    max_alternatives: usize,
    encoding: &'static str,
    sample_rate_hz: u32,
    audio_base64: String,
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    #[serde(default)]
    alternatives: Vec<FixtureAlternative>,
    #[serde(default)]
    speech: Vec<SpeechInterval>,
}

/// Adapter for a generic JSON speech-to-text endpoint.
///
/// Request body: `{language_tag, phrase_hints, max_alternatives, encoding:
/// "LINEAR16", sample_rate_hz, audio_base64}` with an optional bearer token.
/// Response body: `{alternatives: [{text, confidence}], speech: [{start_s, end_s}]}`.
/// Timeouts, connection errors, 429 and 5xx are retryable; other 4xx are
/// configuration errors.
pub struct RemoteAsr {
    settings: RemoteSettings,
    client: reqwest::blocking::Client,
}

impl RemoteAsr {
    pub fn new(settings: RemoteSettings) -> Result<Self, AsrError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(settings.timeout_s.max(0.001)))
            .build()
            .map_err(|e| AsrError::Config(e.to_string()))?;
        Ok(Self { settings, client })
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.settings
    }
}

impl AsrGateway for RemoteAsr {
    fn transcribe(&self, request: &SegmentRequest, config: &AsrConfig) -> Result<TranscriptionResult, AsrError> {
        config.check()?;
        let body = RemoteRequest {
            language_tag: &config.language_tag,
            phrase_hints: &config.phrase_hints,
            max_alternatives: config.max_alternatives,
            encoding: "LINEAR16",
            sample_rate_hz: request.audio.sample_rate(),
            audio_base64: base64::engine::general_purpose::STANDARD.encode(request.audio.to_wav_bytes()),
        };
        let mut req = self.client.post(&self.settings.endpoint).json(&body);
        if let Some(token) = &self.settings.credential {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| AsrError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AsrError::Transport(format!("provider returned {status}")));
        }
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(AsrError::Config(format!("provider returned {status}: {detail}")));
        }
        let parsed: RemoteResponse = resp
            .json()
            .map_err(|e| AsrError::Transport(format!("unreadable provider response: {e}")))?;
        let alternatives = parsed
            .alternatives
            .into_iter()
            .take(config.max_alternatives)
            .enumerate()
            .map(|(i, a)| TranscriptionAlternative {
                text: a.text,
                rank: i as u32 + 1,
                confidence: a.confidence,
            })
            .collect();
        Ok(TranscriptionResult {
            segment_ref: request.segment_ref.clone(),
            alternatives,
            speech: parsed.speech,
            error: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn seg(session: &str, i: usize) -> SegmentRef {
        SegmentRef {
            session: session.into(),
            object_index: i,
        }
    }

    fn audio(seed: i16) -> AudioRef {
        AudioRef::new(8000, vec![seed; 800]).unwrap()
    }

    fn alts(texts: &[&str]) -> Vec<FixtureAlternative> {
        texts
            .iter()
            .map(|t| FixtureAlternative {
                text: t.to_string(),
                confidence: None,
            })
            .collect()
    }

    fn mock() -> MockAsr {
        MockAsr::new(MockFixture {
            entries: vec![
                FixtureEntry {
                    key: FixtureKey::Segment {
                        session: "a/img".into(),
                        object_index: 0,
                    },
                    with_hints: alts(&["dog", "dock", "dug", "doug"]),
                    without_hints: alts(&["dock", "dog"]),
                    speech: vec![SpeechInterval { start_s: 0.4, end_s: 1.1 }],
                    fail: None,
                },
                FixtureEntry {
                    key: FixtureKey::AudioHash {
                        audio_sha256: audio_sha256(&audio(7)),
                    },
                    with_hints: alts(&["cat"]),
                    without_hints: alts(&["cut"]),
                    speech: vec![],
                    fail: None,
                },
                FixtureEntry {
                    key: FixtureKey::Segment {
                        session: "a/img".into(),
                        object_index: 2,
                    },
                    with_hints: vec![],
                    without_hints: vec![],
                    speech: vec![],
                    fail: Some(SimulatedFailure::Transport),
                },
            ],
        })
        .unwrap()
    }

    fn hinted() -> AsrConfig {
        AsrConfig {
            phrase_hints: vec!["dog".into(), "cat".into()],
            ..AsrConfig::default()
        }
    }

    #[test]
    fn fixture_passthrough_ranked_and_truncated() {
        let m = mock();
        let req = SegmentRequest {
            segment_ref: seg("a/img", 0),
            audio: audio(1),
        };
        let r = m.transcribe(&req, &hinted()).unwrap();
        let texts: Vec<_> = r.alternatives.iter().map(|a| a.text.as_str()).collect();
        assert_eq!(texts, ["dog", "dock", "dug"]);
        assert_eq!(r.alternatives.iter().map(|a| a.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(r.speech.len(), 1);

        let r = m.transcribe(&req, &AsrConfig::default()).unwrap();
        assert_eq!(r.alternatives[0].text, "dock");
    }

    #[test]
    fn unknown_segment_is_silent() {
        let m = mock();
        let req = SegmentRequest {
            segment_ref: seg("a/img", 1),
            audio: audio(3),
        };
        let r = m.transcribe(&req, &hinted()).unwrap();
        assert!(r.alternatives.is_empty());
        assert!(r.error.is_none());
    }

    #[test]
    fn audio_hash_lookup() {
        let m = mock();
        let req = SegmentRequest {
            segment_ref: seg("other", 0),
            audio: audio(7),
        };
        assert_eq!(m.transcribe(&req, &hinted()).unwrap().alternatives[0].text, "cat");
    }

    #[test]
    fn bad_config_is_fatal() {
        let m = mock();
        let req = SegmentRequest {
            segment_ref: seg("a/img", 0),
            audio: audio(1),
        };
        let cfg = AsrConfig {
            language_tag: " ".into(),
            ..AsrConfig::default()
        };
        let err = m.transcribe(&req, &cfg).unwrap_err();
        assert!(!err.is_retryable());
    }

    #[test]
    fn fixture_json_format() {
        let text = r#"{"entries":[
            {"key":{"session":"s","object_index":0},"with_hints":[{"text":"dog","confidence":0.9}],"without_hints":[{"text":"dock"}]},
            {"key":{"audio_sha256":"ABCD"},"with_hints":[],"without_hints":[]}
        ]}"#;
        let fixture: MockFixture = serde_json::from_str(text).unwrap();
        assert_eq!(fixture.entries[0].with_hints[0].confidence, Some(0.9));
        assert!(matches!(fixture.entries[1].key, FixtureKey::AudioHash { .. }));
        assert_eq!(MockAsr::new(fixture).unwrap().len(), 2);
    }

    #[test]
    fn batch_preserves_order_and_isolates_failures() {
        let m = mock();
        let reqs: Vec<_> = (0..3)
            .map(|i| SegmentRequest {
                segment_ref: seg("a/img", i),
                audio: audio(i as i16),
            })
            .collect();
        let opts = BatchOptions {
            parallelism: 2,
            ..BatchOptions::default()
        };
        let out = batch_transcribe(&m, &reqs, &hinted(), &opts);
        assert_eq!(out.len(), 3);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.segment_ref.object_index, i);
        }
        assert_eq!(out[0].alternatives[0].text, "dog");
        assert!(out[1].alternatives.is_empty() && out[1].error.is_none());
        assert!(matches!(out[2].error, Some(AsrFailure::Transport(_))));
        assert!(batch_transcribe(&m, &[], &hinted(), &opts).is_empty());
    }

    struct Flaky {
        failures_left: AtomicUsize,
        calls: AtomicUsize,
    }

    impl AsrGateway for Flaky {
        fn transcribe(&self, request: &SegmentRequest, _: &AsrConfig) -> Result<TranscriptionResult, AsrError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err(AsrError::Transport("blip".into()));
            }
            Ok(TranscriptionResult::from_texts(request.segment_ref.clone(), &["a", "b", "c", "d"]))
        }
    }

    #[test]
    fn retries_are_bounded() {
        let req = SegmentRequest {
            segment_ref: seg("s", 0),
            audio: audio(0),
        };
        let opts = BatchOptions::default();
        let flaky = Flaky {
            failures_left: AtomicUsize::new(2),
            calls: AtomicUsize::new(0),
        };
        let r = transcribe_with_retry(&flaky, &req, &AsrConfig::default(), &opts);
        assert!(r.error.is_none());
        assert_eq!(r.alternatives.len(), 3);
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);

        let hopeless = Flaky {
            failures_left: AtomicUsize::new(10),
            calls: AtomicUsize::new(0),
        };
        let r = transcribe_with_retry(&hopeless, &req, &AsrConfig::default(), &opts);
        assert!(r.error.is_some());
        assert_eq!(hopeless.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn env_overrides() {
        let mut s = RemoteSettings::new("http://x");
        let vars: HashMap<&str, &str> = [
            ("SPEAKLABEL_ASR_ENDPOINT", "http://y/recognize"),
            ("SPEAKLABEL_ASR_TOKEN", "secret"),
            ("SPEAKLABEL_ASR_RETRIES", "5"),
        ]
        .into_iter()
        .collect();
        s.apply_vars(|k| vars.get(k).map(|v| v.to_string()));
        assert_eq!(s.endpoint, "http://y/recognize");
        assert_eq!(s.credential.as_deref(), Some("secret"));
        assert_eq!(s.retry_count, 5);
        assert_eq!(s.language_tag, DEFAULT_LANGUAGE_TAG);
    }
}
