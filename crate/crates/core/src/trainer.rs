//! Annotator training: each image is graded from the typed class names
//! against pre-annotated ground truth, and a round of images passes when the
//! micro-averaged recall and precision reach the configured targets.

use crate::asr::TranscriptionResult;
use crate::vocabulary::{normalize, Vocabulary};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

/// Ratios within this distance below a target still meet it.
const TARGET_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("round has {got} graded images, {expected} required")]
    IncompleteRound { got: usize, expected: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("failed to read training log: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed training log: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub images_per_round: usize,
    pub min_recall: f64,
    pub min_precision: f64,
    pub vocabulary_id: String,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            images_per_round: 80,
            min_recall: 0.80,
            min_precision: 0.85,
            vocabulary_id: String::new(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.images_per_round == 0 {
            return Err(TrainerError::InvalidConfig("images_per_round must be at least 1".into()));
        }
        for (name, v) in [("min_recall", self.min_recall), ("min_precision", self.min_precision)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(TrainerError::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// A class name typed next to a click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedEntry {
    pub text: String,
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub missed: BTreeSet<String>,
    pub wrong: BTreeSet<String>,
    pub correct: BTreeSet<String>,
    /// Distinct typed names on this image.
    pub typed_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_precision: Option<f64>,
}

impl Feedback {
    pub fn gt_count(&self) -> usize {
        self.missed.len() + self.correct.len()
    }
}

/// Canonical form of a typed name: the vocabulary class when it matches one,
/// otherwise the normalized text. Blank entries yield nothing.
fn canonical_typed(text: &str, vocab: &Vocabulary) -> Option<String> {
    match vocab.contains(text) {
        Some(c) => Some(c.normalized().to_string()),
        None => normalize(text).ok(),
    }
}

/// Set comparison of typed names against the image's ground-truth classes.
pub fn grade_image<S: AsRef<str>>(typed: &[S], gt_classes: &BTreeSet<String>, vocab: &Vocabulary) -> Feedback {
    let typed: BTreeSet<String> = typed
        .iter()
        .filter_map(|t| canonical_typed(t.as_ref(), vocab))
        .collect();
    Feedback {
        correct: typed.intersection(gt_classes).cloned().collect(),
        wrong: typed.difference(gt_classes).cloned().collect(),
        missed: gt_classes.difference(&typed).cloned().collect(),
        typed_count: typed.len(),
        running_recall: None,
        running_precision: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingImageRecord {
    pub image_id: String,
    pub typed_entries: Vec<TypedEntry>,
    /// Transcriptions of the spoken names, parallel to `typed_entries`.
    #[serde(default)]
    pub spoken_results: Vec<TranscriptionResult>,
    pub feedback: Feedback,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Totals {
    correct: usize,
    gt: usize,
    typed: usize,
}

impl Totals {
    fn of<'a>(feedback: impl IntoIterator<Item = &'a Feedback>) -> Self {
        feedback.into_iter().fold(Self::default(), |acc, f| Self {
            correct: acc.correct + f.correct.len(),
            gt: acc.gt + f.gt_count(),
            typed: acc.typed + f.typed_count,
        })
    }

    fn recall(&self) -> f64 {
        if self.gt == 0 {
            1.0
        } else {
            self.correct as f64 / self.gt as f64
        }
    }

    fn precision(&self) -> f64 {
        if self.typed == 0 {
            if self.gt == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.correct as f64 / self.typed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrade {
    pub image_id: String,
    pub missed: BTreeSet<String>,
    pub wrong: BTreeSet<String>,
    pub correct: BTreeSet<String>,
}

/// Report for one completed training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub annotator_id: String,
    pub round_index: usize,
    pub per_image: Vec<ImageGrade>,
    pub recall: f64,
    pub precision: f64,
    pub passed: bool,
}

/// Micro-averaged recall and precision over a full round.
pub fn round_summary(records: &[TrainingImageRecord], config: &TrainingConfig) -> Result<RoundSummary, TrainerError> {
    config.validate()?;
    if records.len() != config.images_per_round {
        return Err(TrainerError::IncompleteRound {
            got: records.len(),
            expected: config.images_per_round,
        });
    }
    let totals = Totals::of(records.iter().map(|r| &r.feedback));
    let recall = totals.recall();
    let precision = totals.precision();
    Ok(RoundSummary {
        annotator_id: String::new(),
        round_index: 0,
        per_image: records
            .iter()
            .map(|r| ImageGrade {
                image_id: r.image_id.clone(),
                missed: r.feedback.missed.clone(),
                wrong: r.feedback.wrong.clone(),
                correct: r.feedback.correct.clone(),
            })
            .collect(),
        recall,
        precision,
        passed: recall + TARGET_EPS >= config.min_recall && precision + TARGET_EPS >= config.min_precision,
    })
}

/// Fraction of typed entries naming a vocabulary class; absent without entries.
pub fn vocabulary_usage_rate(records: &[TrainingImageRecord], vocab: &Vocabulary) -> Option<f64> {
    let (inside, total) = records
        .iter()
        .flat_map(|r| &r.typed_entries)
        .fold((0usize, 0usize), |(inside, total), e| {
            (inside + usize::from(vocab.contains(&e.text).is_some()), total + 1)
        });
    (total > 0).then(|| inside as f64 / total as f64)
}

/// One annotator's round in progress. A failed round is repeated by
/// starting a fresh `TrainingRound` with the next index.
#[derive(Debug, Clone)]
pub struct TrainingRound {
    pub annotator_id: String,
    pub round_index: usize,
    pub config: TrainingConfig,
    records: Vec<TrainingImageRecord>,
}

impl TrainingRound {
    pub fn new(annotator_id: &str, round_index: usize, config: TrainingConfig) -> Result<Self, TrainerError> {
        config.validate()?;
        Ok(Self {
            annotator_id: annotator_id.to_string(),
            round_index,
            config,
            records: Vec::new(),
        })
    }

    /// Resumes a round from records graded earlier.
    pub fn from_records(
        annotator_id: &str,
        round_index: usize,
        config: TrainingConfig,
        records: Vec<TrainingImageRecord>,
    ) -> Result<Self, TrainerError> {
        let mut round = Self::new(annotator_id, round_index, config)?;
        round.records = records;
        Ok(round)
    }

    pub fn records(&self) -> &[TrainingImageRecord] {
        &self.records
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() >= self.config.images_per_round
    }

    /// Grades one image and returns its feedback with running totals.
    pub fn add_image(
        &mut self,
        image_id: &str,
        typed_entries: Vec<TypedEntry>,
        spoken_results: Vec<TranscriptionResult>,
        gt_classes: &BTreeSet<String>,
        vocab: &Vocabulary,
    ) -> Feedback {
        let texts: Vec<&str> = typed_entries.iter().map(|e| e.text.as_str()).collect();
        let mut feedback = grade_image(&texts, gt_classes, vocab);
        let totals = Totals::of(self.records.iter().map(|r| &r.feedback).chain([&feedback]));
        feedback.running_recall = Some(totals.recall());
        feedback.running_precision = Some(totals.precision());
        self.records.push(TrainingImageRecord {
            image_id: image_id.to_string(),
            typed_entries,
            spoken_results,
            feedback: feedback.clone(),
        });
        feedback
    }

    pub fn summary(&self) -> Result<RoundSummary, TrainerError> {
        let mut summary = round_summary(&self.records, &self.config)?;
        summary.annotator_id = self.annotator_id.clone();
        summary.round_index = self.round_index;
        Ok(summary)
    }
}

/// Image entry of a training log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogImage {
    pub image_id: String,
    pub typed: Vec<TypedEntry>,
    #[serde(default)]
    pub spoken: Vec<TranscriptionResult>,
}

/// Typed and spoken names collected during training, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub annotator_id: String,
    /// Whether `spoken` results were produced with phrase hints.
    #[serde(default = "default_true")]
    pub phrase_hints: bool,
    pub images: Vec<TrainingLogImage>,
}

fn default_true() -> bool {
    true
}

impl TrainingLog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainerError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Grades every image against `gt_classes_of` and groups them into rounds.
    /// A trailing partial round is returned unsummarized.
    pub fn grade(
        &self,
        config: &TrainingConfig,
        vocab: &Vocabulary,
        gt_classes_of: impl Fn(&str) -> Option<BTreeSet<String>>,
    ) -> Result<(Vec<RoundSummary>, Vec<TrainingImageRecord>, Option<TrainingRound>), TrainerError> {
        let mut summaries = Vec::new();
        let mut all_records = Vec::new();
        let mut round = TrainingRound::new(&self.annotator_id, 0, config.clone())?;
        for image in &self.images {
            let gt = gt_classes_of(&image.image_id).unwrap_or_default();
            round.add_image(&image.image_id, image.typed.clone(), image.spoken.clone(), &gt, vocab);
            if round.is_complete() {
                summaries.push(round.summary()?);
                all_records.extend(round.records.iter().cloned());
                round = TrainingRound::new(&self.annotator_id, summaries.len(), config.clone())?;
            }
        }
        all_records.extend(round.records.iter().cloned());
        let partial = (!round.records.is_empty()).then_some(round);
        Ok((summaries, all_records, partial))
    }
}
