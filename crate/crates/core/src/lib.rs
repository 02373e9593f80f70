//! Speech-driven object class labelling.
//!
//! Annotators click on one object per class while saying its name. This crate
//! turns the resulting event logs and audio recordings into image-level class
//! labels and evaluates them:
//!
//! - [`vocabulary`]: closed class vocabulary and name normalization
//! - [`session`]: event logs, PCM audio and the on-disk session store
//! - [`alignment`]: click-driven segmentation of the recording
//! - [`asr`]: speech recognition gateway (fixture mock and HTTP adapter)
//! - [`matcher`]: transcription to class resolution with embedding fallback
//! - [`dataset`]: COCO-style ground truth and point-in-mask tests
//! - [`trainer`]: annotator training rounds and grading
//! - [`metrics`]: accuracy, timing and transcription metrics
//! - [`pipeline`]: end-to-end orchestration per image and per corpus
//! - [`synth`]: deterministic synthetic corpora used as fixtures

pub mod alignment;
pub mod asr;
pub mod dataset;
pub mod matcher;
pub mod metrics;
pub mod pipeline;
pub mod session;
pub mod synth;
pub mod trainer;
pub mod vocabulary;

pub use alignment::{segment_recording, AudioSegment};
pub use asr::{AsrConfig, AsrGateway, MockAsr, TranscriptionAlternative, TranscriptionResult};
pub use dataset::{GroundTruthImage, GroundTruthSet, MaskTest};
pub use matcher::{EmbeddingTable, LabelMatcher, LabelResolution, ResolutionMethod};
pub use pipeline::{ImageLabeling, ObjectAnnotation, PipelineConfig};
pub use session::{AudioRef, Event, EventKind, ImageSession, SessionStore};
pub use vocabulary::{ClassName, Vocabulary};
