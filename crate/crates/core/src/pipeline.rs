//! End-to-end processing of image sessions: clicks are turned into audio
//! segments, segments are transcribed with the vocabulary as phrase hints,
//! and transcriptions are resolved to classes.

use crate::alignment::{segment_recording, AlignmentError, AudioSegment, DEFAULT_DELTA_S};
use crate::asr::{batch_transcribe, AsrConfig, AsrGateway, BatchOptions, SegmentRef, SegmentRequest, TranscriptionResult};
use crate::dataset::GroundTruthSet;
use crate::matcher::{resolve_session, EmbeddingTable, LabelMatcher, LabelResolution, ResolutionMethod};
use crate::metrics::{corpus_report, evaluate_image, CorpusReport, ImageEvaluation, ReportOptions, TrainingEvidence};
use crate::session::{write_atomic, ImageSession, SessionError, SessionStore};
use crate::vocabulary::Vocabulary;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const LABELING_FILE: &str = "labeling.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("session uses vocabulary {session:?} but {given:?} was supplied")]
    VocabularyMismatch { session: String, given: String },
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFlag {
    Duplicate,
    Unlabeled,
}

/// One click with everything derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub object_index: usize,
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub segment: AudioSegment,
    pub transcription: TranscriptionResult,
    pub resolution: Option<LabelResolution>,
    pub flags: BTreeSet<AnnotationFlag>,
}

impl ObjectAnnotation {
    pub fn is_representative(&self) -> bool {
        self.resolution.is_some() && !self.flags.contains(&AnnotationFlag::Duplicate)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingFlags {
    pub duplicate: usize,
    pub unlabeled: usize,
}

/// Labels of one image plus all intermediate artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLabeling {
    pub image_id: String,
    pub session: String,
    pub annotations: Vec<ObjectAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutput {
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub method: ResolutionMethod,
    pub alternatives: Vec<String>,
}

/// Wire form of a labeling: `{image_id, labels: [...], flags}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingOutput {
    pub image_id: String,
    pub labels: Vec<LabelOutput>,
    pub flags: LabelingFlags,
}

impl ImageLabeling {
    /// One representative annotation per class, in click order.
    pub fn labels(&self) -> impl Iterator<Item = &ObjectAnnotation> {
        self.annotations.iter().filter(|a| a.is_representative())
    }

    pub fn label_set(&self) -> BTreeSet<String> {
        self.labels()
            .filter_map(|a| a.resolution.as_ref())
            .map(|r| r.class.normalized().to_string())
            .collect()
    }

    pub fn flags(&self) -> LabelingFlags {
        let count = |f| self.annotations.iter().filter(|a| a.flags.contains(&f)).count();
        LabelingFlags {
            duplicate: count(AnnotationFlag::Duplicate),
            unlabeled: count(AnnotationFlag::Unlabeled),
        }
    }

    /// Detected speech in session time.
    pub fn speech_intervals(&self) -> Vec<(f64, f64)> {
        self.annotations
            .iter()
            .flat_map(|a| {
                a.transcription
                    .speech
                    .iter()
                    .map(move |s| (a.segment.start_s + s.start_s, a.segment.start_s + s.end_s))
            })
            .collect()
    }

    pub fn to_output(&self) -> LabelingOutput {
        LabelingOutput {
            image_id: self.image_id.clone(),
            labels: self
                .labels()
                .map(|a| {
                    let r = a.resolution.as_ref().expect("representatives are resolved");
                    LabelOutput {
                        class: r.class.normalized().to_string(),
                        x: a.x,
                        y: a.y,
                        t: a.t,
                        method: r.method,
                        alternatives: a.transcription.alternatives.iter().map(|x| x.text.clone()).collect(),
                    }
                })
                .collect(),
            flags: self.flags(),
        }
    }

    pub fn output_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(&self.to_output()).expect("labeling serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn annotations_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("annotations serialize");
        bytes.push(b'\n');
        bytes
    }

    /// Writes `labeling.json` and `annotations.json` into `dir`, replacing
    /// earlier outputs.
    pub fn write(&self, dir: &Path) -> Result<(), SessionError> {
        write_atomic(&dir.join(LABELING_FILE), &self.output_json())?;
        write_atomic(&dir.join(ANNOTATIONS_FILE), &self.annotations_json())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub delta_s: f64,
    pub phrase_hints: bool,
    pub language_tag: String,
    pub max_alternatives: usize,
    pub similarity_floor: Option<f64>,
    /// Concurrent segment transcriptions within one image.
    pub segment_parallelism: usize,
    /// Concurrent images in corpus mode.
    pub image_parallelism: usize,
    pub max_attempts: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let asr = AsrConfig::default();
        Self {
            delta_s: DEFAULT_DELTA_S,
            phrase_hints: true,
            language_tag: asr.language_tag,
            max_alternatives: asr.max_alternatives,
            similarity_floor: None,
            segment_parallelism: 1,
            image_parallelism: 4,
            max_attempts: 3,
        }
    }
}

impl PipelineConfig {
    pub fn asr_config(&self, vocab: &Vocabulary) -> AsrConfig {
        AsrConfig {
            language_tag: self.language_tag.clone(),
            phrase_hints: if self.phrase_hints { vocab.phrase_hints() } else { Vec::new() },
            max_alternatives: self.max_alternatives,
        }
    }

    fn batch_options(&self) -> BatchOptions {
        BatchOptions {
            parallelism: self.segment_parallelism.max(1),
            max_attempts: self.max_attempts.max(1),
            ..BatchOptions::default()
        }
    }
}

/// Segments the recording at the session's clicks and cuts one request per
/// segment. Zero-length segments get no request.
pub fn segment_requests(
    session: &ImageSession,
    delta_s: f64,
) -> Result<(Vec<AudioSegment>, Vec<Option<SegmentRequest>>), PipelineError> {
    let clicks = session.clicks();
    let times: Vec<f64> = clicks.clicks.iter().map(|c| c.t).collect();
    let segments = segment_recording(&times, session.audio.duration_s(), delta_s)?;
    let key = session.key();
    let requests = segments
        .iter()
        .map(|s| {
            let segment_ref = SegmentRef {
                session: key.clone(),
                object_index: s.object_index,
            };
            if s.length_s() <= 0.0 {
                return Ok(None);
            }
            Ok(Some(SegmentRequest {
                segment_ref,
                audio: session.audio.slice(s.start_s, s.end_s)?,
            }))
        })
        .collect::<Result<Vec<_>, SessionError>>()?;
    Ok((segments, requests))
}

/// Processes one image session. ASR failures mark single clicks unlabeled and
/// never abort the image.
pub fn process_image(
    session: &ImageSession,
    vocab: &Vocabulary,
    asr: &dyn AsrGateway,
    table: &EmbeddingTable,
    config: &PipelineConfig,
) -> Result<ImageLabeling, PipelineError> {
    if session.meta.vocabulary_id != vocab.id() {
        return Err(PipelineError::VocabularyMismatch {
            session: session.meta.vocabulary_id.clone(),
            given: vocab.id().to_string(),
        });
    }
    let click_list = session.clicks();
    let (segments, requests) = segment_requests(session, config.delta_s)?;
    let mut warnings = click_list.warnings.clone();
    for s in segments.iter().filter(|s| s.is_short()) {
        warnings.push(format!(
            "segment {} is only {:.3} s long",
            s.object_index,
            s.length_s()
        ));
    }

    let live: Vec<SegmentRequest> = requests.iter().flatten().cloned().collect();
    let mut transcribed = batch_transcribe(asr, &live, &config.asr_config(vocab), &config.batch_options()).into_iter();
    let key = session.key();
    let results: Vec<TranscriptionResult> = requests
        .iter()
        .enumerate()
        .map(|(i, r)| match r {
            Some(_) => transcribed.next().expect("one result per request"),
            None => TranscriptionResult::silent(SegmentRef {
                session: key.clone(),
                object_index: i,
            }),
        })
        .collect();

    let matcher = LabelMatcher::new(vocab, table).with_similarity_floor(config.similarity_floor);
    let annotations = resolve_session(&click_list.clicks, &segments, &results, &matcher);
    Ok(ImageLabeling {
        image_id: session.meta.image_id.clone(),
        session: key,
        annotations,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct ProcessedImage {
    pub dir: PathBuf,
    pub session: ImageSession,
    pub labeling: ImageLabeling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub path: PathBuf,
    pub error: String,
}

/// Outcome of processing every session of a store.
#[derive(Debug, Clone, Default)]
pub struct CorpusRun {
    pub images: Vec<ProcessedImage>,
    pub failures: Vec<ImageFailure>,
}

impl CorpusRun {
    /// Evaluates the labelings against ground truth. Images without ground
    /// truth or with inconsistent event logs count as failures.
    pub fn evaluate(&self, gt: &GroundTruthSet, options: &ReportOptions) -> (Vec<ImageEvaluation>, Vec<ImageFailure>) {
        let mut evaluations = Vec::new();
        let mut failures = Vec::new();
        for img in &self.images {
            let Some(gt_image) = gt.get(&img.session.meta.image_id) else {
                failures.push(ImageFailure {
                    path: img.dir.clone(),
                    error: format!("no ground truth for image {}", img.session.meta.image_id),
                });
                continue;
            };
            match evaluate_image(&img.session, &img.labeling, gt_image, options) {
                Ok(e) => evaluations.push(e),
                Err(e) => failures.push(ImageFailure {
                    path: img.dir.clone(),
                    error: e.to_string(),
                }),
            }
        }
        (evaluations, failures)
    }

    pub fn report(
        &self,
        gt: &GroundTruthSet,
        training: &TrainingEvidence,
        vocab: &Vocabulary,
        options: &ReportOptions,
    ) -> CorpusReport {
        let (evaluations, failures) = self.evaluate(gt, options);
        corpus_report(&evaluations, self.failures.len() + failures.len(), training, vocab, options)
    }
}

/// Processes every session of `store`. Per-image failures are recorded and
/// the corpus continues. When `write_outputs` is set, each session folder
/// receives `labeling.json` and `annotations.json`.
pub fn process_corpus(
    store: &SessionStore,
    vocab: &Vocabulary,
    asr: &dyn AsrGateway,
    table: &EmbeddingTable,
    config: &PipelineConfig,
    write_outputs: bool,
) -> Result<CorpusRun, SessionError> {
    Ok(process_dirs(&store.session_dirs()?, vocab, asr, table, config, write_outputs))
}

/// [`process_corpus`] over an explicit list of session folders.
pub fn process_dirs(
    dirs: &[PathBuf],
    vocab: &Vocabulary,
    asr: &dyn AsrGateway,
    table: &EmbeddingTable,
    config: &PipelineConfig,
    write_outputs: bool,
) -> CorpusRun {
    use rayon::prelude::*;
    let run_one = |dir: &PathBuf| -> Result<ProcessedImage, ImageFailure> {
        let fail = |error: String| ImageFailure {
            path: dir.clone(),
            error,
        };
        let session = SessionStore::load(dir).map_err(|e| fail(e.to_string()))?;
        let labeling = process_image(&session, vocab, asr, table, config).map_err(|e| fail(e.to_string()))?;
        if write_outputs {
            labeling.write(dir).map_err(|e| fail(e.to_string()))?;
        }
        Ok(ProcessedImage {
            dir: dir.clone(),
            session,
            labeling,
        })
    };
    let outcomes: Vec<Result<ProcessedImage, ImageFailure>> = if config.image_parallelism <= 1 {
        dirs.iter().map(run_one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.image_parallelism)
            .build()
            .expect("thread pool")
            .install(|| dirs.par_iter().map(run_one).collect())
    };
    let mut run = CorpusRun::default();
    for outcome in outcomes {
        match outcome {
            Ok(img) => run.images.push(img),
            Err(f) => {
                log::warn!("{}: {}", f.path.display(), f.error);
                run.failures.push(f);
            }
        }
    }
    run
}
