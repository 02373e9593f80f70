//! Annotation session data: per-image event logs, PCM recordings and the
//! directory-backed session store.
//!
//! Every timestamp is in seconds relative to the `image_shown` event, which is
//! also the first sample of the recording.

use log::warn;
use serde::{Deserialize, Serialize};
use std::io::Cursor;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const AUDIO_FILE: &str = "audio.wav";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("line {line}: malformed event: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {reason}")]
    InvalidEvent { line: usize, reason: String },
    #[error("invalid event log: {0}")]
    InvalidLog(String),
    #[error("invalid audio: {0}")]
    Audio(String),
    #[error("audio range [{start_s}, {end_s}) outside recording of {duration_s} s")]
    Range {
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed meta.json: {source}")]
    Meta {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    InSession {
        path: PathBuf,
        source: Box<SessionError>,
    },
}

impl SessionError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn in_session(path: &Path, source: SessionError) -> Self {
        Self::InSession {
            path: path.to_path_buf(),
            source: Box::new(source),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ImageShown,
    Click,
    MouseMove,
    Key,
    ShowClassesOpen,
    ShowClassesClose,
    Submit,
    /// Compensating event emitted by the UI when the last click is deleted.
    UndoClick,
}

impl EventKind {
    pub fn has_position(self) -> bool {
        matches!(self, EventKind::Click | EventKind::MouseMove)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

impl Event {
    pub fn new(kind: EventKind, t: f64) -> Self {
        Self {
            kind,
            t,
            x: None,
            y: None,
            key: None,
        }
    }

    pub fn at(kind: EventKind, t: f64, x: f64, y: f64) -> Self {
        Self {
            kind,
            t,
            x: Some(x),
            y: Some(y),
            key: None,
        }
    }

    pub fn position(&self) -> Option<(f64, f64)> {
        self.x.zip(self.y)
    }
}

/// Parses and validates a line-delimited JSON event log.
///
/// `image_size`, when given, bounds the coordinates of clicks and mouse moves.
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_event_log(text: &str, image_size: Option<(u32, u32)>) -> Result<Vec<Event>, SessionError> {
    let mut events = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(raw).map_err(|e| SessionError::Parse {
            line,
            message: e.to_string(),
        })?;
        events.push(event);
        lines.push(line);
    }
    validate_events(&events, image_size).map_err(|(idx, reason)| match idx {
        Some(i) => SessionError::InvalidEvent {
            line: lines[i],
            reason,
        },
        None => SessionError::InvalidLog(reason),
    })?;
    Ok(events)
}

/// Checks the ordering and field rules of an event sequence. On failure
/// returns the offending event index (if any) and a reason.
pub fn validate_events(
    events: &[Event],
    image_size: Option<(u32, u32)>,
) -> Result<(), (Option<usize>, String)> {
    let Some(first) = events.first() else {
        return Err((None, "empty event log".into()));
    };
    if first.kind != EventKind::ImageShown {
        return Err((Some(0), format!("first event must be image_shown, got {:?}", first.kind)));
    }
    if first.t != 0.0 {
        return Err((Some(0), "image_shown must be at t = 0".into()));
    }
    let last = events.len() - 1;
    if events[last].kind != EventKind::Submit {
        return Err((None, "log does not end with submit".into()));
    }
    let mut prev_t = 0.0;
    for (i, ev) in events.iter().enumerate() {
        if !ev.t.is_finite() || ev.t < 0.0 {
            return Err((Some(i), format!("invalid timestamp {}", ev.t)));
        }
        if ev.t < prev_t {
            return Err((Some(i), format!("timestamp {} precedes previous {}", ev.t, prev_t)));
        }
        prev_t = ev.t;
        match ev.kind {
            EventKind::ImageShown if i != 0 => {
                return Err((Some(i), "duplicate image_shown".into()));
            }
            EventKind::Submit if i != last => {
                return Err((Some(i), "submit must be the last event".into()));
            }
            _ => {}
        }
        if ev.kind.has_position() {
            let Some((x, y)) = ev.position() else {
                return Err((Some(i), format!("{:?} event without coordinates", ev.kind)));
            };
            if !x.is_finite() || !y.is_finite() || x < 0.0 || y < 0.0 {
                return Err((Some(i), format!("invalid coordinates ({x}, {y})")));
            }
            if let Some((w, h)) = image_size {
                if x > f64::from(w) || y > f64::from(h) {
                    return Err((Some(i), format!("coordinates ({x}, {y}) outside {w}x{h} image")));
                }
            }
        }
    }
    Ok(())
}

/// Renders events back to the line-delimited wire format.
pub fn serialize_event_log(events: &[Event]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(ev).expect("event serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Click {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClickList {
    pub clicks: Vec<Click>,
    pub warnings: Vec<String>,
}

/// Extracts clicks in time order. `undo_click` removes the most recent
/// surviving click. Equal timestamps are kept in log order with a warning.
pub fn clicks(events: &[Event]) -> ClickList {
    let mut out = ClickList::default();
    for ev in events {
        match ev.kind {
            EventKind::Click => {
                if let Some((x, y)) = ev.position() {
                    out.clicks.push(Click { t: ev.t, x, y });
                }
            }
            EventKind::UndoClick => {
                out.clicks.pop();
            }
            _ => {}
        }
    }
    // the log is validated as non-decreasing, so a stable sort only guards
    // unvalidated input
    out.clicks.sort_by(|a, b| a.t.total_cmp(&b.t));
    for pair in out.clicks.windows(2) {
        if pair[0].t == pair[1].t {
            let msg = format!("duplicate click timestamp {}", pair[0].t);
            warn!("{msg}");
            out.warnings.push(msg);
        }
    }
    out
}

/// 16-bit linear PCM mono recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioRef {
    sample_rate: u32,
    samples: Vec<i16>,
}

impl AudioRef {
    pub fn new(sample_rate: u32, samples: Vec<i16>) -> Result<Self, SessionError> {
        if sample_rate == 0 {
            return Err(SessionError::Audio("sample rate must be positive".into()));
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    /// Decodes a RIFF WAVE blob; anything but 16-bit integer mono is rejected.
    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self, SessionError> {
        let reader = hound::WavReader::new(Cursor::new(bytes))
            .map_err(|e| SessionError::Audio(e.to_string()))?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(SessionError::Audio(format!(
                "expected 16-bit PCM mono, got {} channel(s), {} bits, {:?}",
                spec.channels, spec.bits_per_sample, spec.sample_format
            )));
        }
        let samples = reader
            .into_samples::<i16>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SessionError::Audio(e.to_string()))?;
        let audio = Self::new(spec.sample_rate, samples)?;
        if audio.samples.is_empty() {
            return Err(SessionError::Audio("recording has no samples".into()));
        }
        Ok(audio)
    }

    pub fn to_wav_bytes(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::with_capacity(44 + 2 * self.samples.len()));
        {
            let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory WAV writer");
            let mut w16 = writer.get_i16_writer(self.samples.len() as u32);
            for &s in &self.samples {
                w16.write_sample(s);
            }
            w16.flush().expect("in-memory WAV write");
            writer.finalize().expect("in-memory WAV finalize");
        }
        cursor.into_inner()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    fn sample_index(&self, t: f64) -> usize {
        let x = t * f64::from(self.sample_rate);
        // times that are exact multiples of the sample period must not lose a
        // sample to rounding in the product
        let r = x.round();
        if (x - r).abs() < 1e-6 {
            r as usize
        } else {
            x.floor() as usize
        }
    }

    /// Samples `[floor(start_s * rate), floor(end_s * rate))` as a new recording.
    pub fn slice(&self, start_s: f64, end_s: f64) -> Result<AudioRef, SessionError> {
        let duration_s = self.duration_s();
        let range_err = || SessionError::Range {
            start_s,
            end_s,
            duration_s,
        };
        if !(start_s.is_finite() && end_s.is_finite()) || start_s < 0.0 || start_s >= end_s {
            return Err(range_err());
        }
        if end_s > duration_s + 1e-9 {
            return Err(range_err());
        }
        let lo = self.sample_index(start_s);
        let hi = self.sample_index(end_s).min(self.samples.len());
        if lo >= hi {
            return Err(range_err());
        }
        Ok(AudioRef {
            sample_rate: self.sample_rate,
            samples: self.samples[lo..hi].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Training,
    Main,
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub image_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub vocabulary_id: String,
    pub annotator_id: String,
    pub mode: SessionMode,
}

impl SessionMeta {
    /// Identifier used to key per-session fixtures and outputs.
    pub fn key(&self) -> String {
        format!("{}/{}", self.annotator_id, self.image_id)
    }
}

/// One annotator's interaction with one image.
#[derive(Debug, Clone)]
pub struct ImageSession {
    pub meta: SessionMeta,
    pub events: Vec<Event>,
    pub audio: AudioRef,
}

impl ImageSession {
    pub fn new(meta: SessionMeta, events: Vec<Event>, audio: AudioRef) -> Result<Self, SessionError> {
        let session = Self { meta, events, audio };
        session.validate()?;
        Ok(session)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        validate_events(&self.events, Some(self.image_size())).map_err(|(i, reason)| match i {
            Some(i) => SessionError::InvalidEvent { line: i + 1, reason },
            None => SessionError::InvalidLog(reason),
        })?;
        let last_t = self.events.last().map_or(0.0, |e| e.t);
        if self.audio.duration_s() + 1e-9 < last_t {
            return Err(SessionError::Audio(format!(
                "recording of {:.3} s ends before last event at {:.3} s",
                self.audio.duration_s(),
                last_t
            )));
        }
        Ok(())
    }

    pub fn key(&self) -> String {
        self.meta.key()
    }

    pub fn image_size(&self) -> (u32, u32) {
        (self.meta.image_width, self.meta.image_height)
    }

    pub fn clicks(&self) -> ClickList {
        clicks(&self.events)
    }

    /// Time of the submit event.
    pub fn duration_s(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.t)
    }
}

/// Directory layout with one folder per image session, each holding
/// `events.jsonl`, `audio.wav` and `meta.json`.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Session folders (those containing `meta.json`) in sorted path order.
    pub fn session_dirs(&self) -> Result<Vec<PathBuf>, SessionError> {
        if !self.root.is_dir() {
            return Err(SessionError::io(
                &self.root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "store directory not found"),
            ));
        }
        let mut dirs = Vec::new();
        for entry in walkdir::WalkDir::new(&self.root).sort_by_file_name() {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(&self.root).to_path_buf();
                SessionError::io(&path, e.into())
            })?;
            if entry.file_type().is_file() && entry.file_name() == META_FILE {
                if let Some(parent) = entry.path().parent() {
                    dirs.push(parent.to_path_buf());
                }
            }
        }
        dirs.sort();
        Ok(dirs)
    }

    pub fn load_meta(dir: &Path) -> Result<SessionMeta, SessionError> {
        let path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| SessionError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| SessionError::Meta { path, source })
    }

    /// Loads and validates one session folder.
    pub fn load(dir: &Path) -> Result<ImageSession, SessionError> {
        let meta = Self::load_meta(dir)?;
        let events_path = dir.join(EVENTS_FILE);
        let text = std::fs::read_to_string(&events_path).map_err(|e| SessionError::io(&events_path, e))?;
        let events = parse_event_log(&text, Some((meta.image_width, meta.image_height)))
            .map_err(|e| SessionError::in_session(&events_path, e))?;
        let audio_path = dir.join(AUDIO_FILE);
        let bytes = std::fs::read(&audio_path).map_err(|e| SessionError::io(&audio_path, e))?;
        let audio = AudioRef::from_wav_bytes(&bytes).map_err(|e| SessionError::in_session(&audio_path, e))?;
        ImageSession::new(meta, events, audio).map_err(|e| SessionError::in_session(dir, e))
    }

    /// Writes a session folder under `dir`, replacing existing files.
    pub fn write(dir: &Path, session: &ImageSession) -> Result<(), SessionError> {
        std::fs::create_dir_all(dir).map_err(|e| SessionError::io(dir, e))?;
        let meta = serde_json::to_vec_pretty(&session.meta).expect("meta serializes");
        write_atomic(&dir.join(META_FILE), &meta)?;
        write_atomic(&dir.join(EVENTS_FILE), serialize_event_log(&session.events).as_bytes())?;
        write_atomic(&dir.join(AUDIO_FILE), &session.audio.to_wav_bytes())?;
        Ok(())
    }

    /// Default folder for a session inside this store.
    pub fn dir_for(&self, meta: &SessionMeta) -> PathBuf {
        self.root.join(&meta.annotator_id).join(&meta.image_id)
    }
}

/// Write-then-rename so concurrent readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SessionError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, bytes).map_err(|e| SessionError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| SessionError::io(path, e))
}
