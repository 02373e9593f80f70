//! Evaluation of labelings: semantic accuracy, location accuracy, timing,
//! time allocation, mouse effort, rank correlations and transcription
//! accuracy.
//!
//! Statistics with an empty denominator or zero variance are reported as
//! `None`, never as zero. Corpus precision and recall are micro-averaged.

use crate::dataset::{GroundTruthImage, MaskTest};
use crate::pipeline::{AnnotationFlag, ImageLabeling};
use crate::session::{clicks, Event, EventKind, ImageSession};
use crate::trainer::{vocabulary_usage_rate, TrainingImageRecord};
use crate::vocabulary::{normalize, Vocabulary};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Consecutive mouse moves closer than this count as continuous motion.
pub const DEFAULT_MOVING_GAP_S: f64 = 0.1;
pub const DEFAULT_UTTERANCE_BIN_S: f64 = 0.25;
pub const DEFAULT_IMAGE_TIME_BIN_S: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("show_classes_close at {0} s without a matching open")]
    UnmatchedClose(f64),
    #[error("show_classes_open at {0} s while the class list is already open")]
    NestedOpen(f64),
    #[error("show_classes_open at {0} s never closed")]
    UnclosedOpen(f64),
}

// ---------------------------------------------------------------------------
// Semantic accuracy

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetCounts {
    pub true_positives: usize,
    pub predicted: usize,
    pub ground_truth: usize,
}

impl SetCounts {
    pub fn of(predicted: &BTreeSet<String>, gt: &BTreeSet<String>) -> Self {
        Self {
            true_positives: predicted.intersection(gt).count(),
            predicted: predicted.len(),
            ground_truth: gt.len(),
        }
    }

    pub fn add(self, other: Self) -> Self {
        Self {
            true_positives: self.true_positives + other.true_positives,
            predicted: self.predicted + other.predicted,
            ground_truth: self.ground_truth + other.ground_truth,
        }
    }

    /// With nothing predicted, precision is 1 when there is also nothing to
    /// find and 0 otherwise. With nothing to find, recall is 1.
    pub fn prf(&self) -> Prf {
        let tp = self.true_positives as f64;
        let precision = if self.predicted == 0 {
            if self.ground_truth == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            tp / self.predicted as f64
        };
        let recall = if self.ground_truth == 0 {
            1.0
        } else {
            tp / self.ground_truth as f64
        };
        Prf {
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

pub fn semantic_prf(predicted: &BTreeSet<String>, gt: &BTreeSet<String>) -> Prf {
    SetCounts::of(predicted, gt).prf()
}

/// Micro-averaged over images; `None` for an empty corpus.
pub fn corpus_prf<'a>(
    images: impl IntoIterator<Item = (&'a BTreeSet<String>, &'a BTreeSet<String>)>,
) -> Option<(Prf, SetCounts)> {
    let mut any = false;
    let totals = images.into_iter().fold(SetCounts::default(), |acc, (p, g)| {
        any = true;
        acc.add(SetCounts::of(p, g))
    });
    any.then(|| (totals.prf(), totals))
}

// ---------------------------------------------------------------------------
// Location accuracy

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocationAccuracy {
    pub value: Option<f64>,
    pub hits: usize,
    pub misses: usize,
    pub ignored: usize,
}

/// Hits over hits plus misses; clicks on classes absent from the image are
/// counted separately and excluded.
pub fn location_accuracy(outcomes: impl IntoIterator<Item = MaskTest>) -> LocationAccuracy {
    let mut acc = LocationAccuracy::default();
    for o in outcomes {
        match o {
            MaskTest::Hit => acc.hits += 1,
            MaskTest::Miss => acc.misses += 1,
            MaskTest::ClassAbsent => acc.ignored += 1,
        }
    }
    let countable = acc.hits + acc.misses;
    acc.value = (countable > 0).then(|| acc.hits as f64 / countable as f64);
    acc
}

/// Mask test for every resolved click (duplicates included).
pub fn click_outcomes(labeling: &ImageLabeling, gt: &GroundTruthImage) -> Vec<MaskTest> {
    labeling
        .annotations
        .iter()
        .filter_map(|a| {
            a.resolution
                .as_ref()
                .map(|r| gt.point_in_class_mask(r.class.normalized(), (a.x, a.y)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Intervals

/// Sorted, disjoint union of closed intervals.
pub fn interval_union(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.retain(|(a, b)| b > a);
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (a, b) in intervals {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

pub fn total_length(intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|(a, b)| b - a).sum()
}

/// Overlap length of two disjoint sorted interval lists.
pub fn intersection_length(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j, mut total) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Intervals during which the mouse is moving: spans between consecutive
/// `mouse_move` events no more than `gap_s` apart.
pub fn mouse_moving_intervals(events: &[Event], gap_s: f64) -> Vec<(f64, f64)> {
    let moves: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == EventKind::MouseMove)
        .map(|e| e.t)
        .collect();
    interval_union(
        moves
            .windows(2)
            .filter(|w| w[1] - w[0] <= gap_s)
            .map(|w| (w[0], w[1]))
            .collect(),
    )
}

/// Paired `show_classes_open` / `show_classes_close` intervals.
pub fn consult_intervals(events: &[Event]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for e in events {
        match e.kind {
            EventKind::ShowClassesOpen => {
                if open.is_some() {
                    return Err(MetricsError::NestedOpen(e.t));
                }
                open = Some(e.t);
            }
            EventKind::ShowClassesClose => {
                let start = open.take().ok_or(MetricsError::UnmatchedClose(e.t))?;
                out.push((start, e.t));
            }
            _ => {}
        }
    }
    match open {
        Some(t) => Err(MetricsError::UnclosedOpen(t)),
        None => Ok(out),
    }
}

/// Sum of Euclidean steps between consecutive pointer positions (mouse moves
/// and clicks).
pub fn mouse_path_length(events: &[Event]) -> f64 {
    let positions: Vec<(f64, f64)> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::MouseMove | EventKind::Click))
        .filter_map(Event::position)
        .collect();
    positions
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .sum()
}

// ---------------------------------------------------------------------------
// Rank correlation

/// Ranks starting at 1, ties receiving the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho with average ranks for ties. `None` for fewer than two
/// pairs, mismatched lengths, or a constant input.
pub fn spearman_rank_correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 { (v[m - 1] + v[m]) / 2.0 } else { v[m] })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

// ---------------------------------------------------------------------------
// Transcription accuracy

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallAtK {
    pub k: usize,
    pub value: Option<f64>,
    pub hits: usize,
    pub counted: usize,
    /// Entries without any transcription alternatives.
    pub excluded: usize,
}

/// Fraction of typed names found among the top `k` alternatives of the
/// transcription of the same click. Entries with no alternatives are skipped.
pub fn transcription_recall_at_k(records: &[TrainingImageRecord], k: usize) -> RecallAtK {
    let mut out = RecallAtK {
        k,
        ..RecallAtK::default()
    };
    for record in records {
        for (i, entry) in record.typed_entries.iter().enumerate() {
            let Some(result) = record.spoken_results.get(i).filter(|r| !r.alternatives.is_empty()) else {
                out.excluded += 1;
                continue;
            };
            out.counted += 1;
            let Ok(typed) = normalize(&entry.text) else { continue };
            let mut ranked: Vec<_> = result.alternatives.iter().collect();
            ranked.sort_by_key(|a| a.rank);
            if ranked
                .iter()
                .take(k)
                .any(|a| normalize(&a.text).is_ok_and(|t| t == typed))
            {
                out.hits += 1;
            }
        }
    }
    out.value = (out.counted > 0).then(|| out.hits as f64 / out.counted as f64);
    out
}

// ---------------------------------------------------------------------------
// Histograms

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Fixed-width bins `[i*w, (i+1)*w)` spanning the lowest to the highest
/// occupied bin.
pub fn histogram(values: &[f64], bin_width: f64) -> Vec<Bin> {
    assert!(bin_width > 0.0, "bin width must be positive");
    let idx: Vec<i64> = values
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| (v / bin_width).floor() as i64)
        .collect();
    let (Some(&lo), Some(&hi)) = (idx.iter().min(), idx.iter().max()) else {
        return Vec::new();
    };
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for i in idx {
        counts[(i - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(j, count)| {
            let i = lo + j as i64;
            Bin {
                lo: i as f64 * bin_width,
                hi: (i + 1) as f64 * bin_width,
                count,
            }
        })
        .collect()
}

/// Bin holding the most values (earliest on ties).
pub fn mode_bin(bins: &[Bin]) -> Option<Bin> {
    bins.iter()
        .copied()
        .fold(None, |best: Option<Bin>, b| match best {
            Some(x) if x.count >= b.count => Some(x),
            _ => Some(b),
        })
}

// ---------------------------------------------------------------------------
// Timing

/// Timing facts of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTiming {
    pub duration_s: f64,
    pub click_times: Vec<f64>,
    pub label_count: usize,
    /// End of the last detected speech, if speech activity is known.
    pub last_speech_end_s: Option<f64>,
}

impl ImageTiming {
    /// `t_k - t_{k-1}` with `t_0` the moment the image was shown.
    pub fn per_click_times(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.click_times
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    /// Time from the last click to submit.
    pub fn final_interval_s(&self) -> f64 {
        self.duration_s - self.click_times.last().copied().unwrap_or(0.0)
    }

    /// Time between the last spoken name (or last click) and submit.
    pub fn final_review_s(&self) -> Option<f64> {
        let last_click = *self.click_times.last()?;
        let end = self.last_speech_end_s.unwrap_or(last_click);
        Some((self.duration_s - end).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickIndexStat {
    /// 1-based click position within the image.
    pub index: usize,
    pub mean_s: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub images: usize,
    pub labels: usize,
    pub time_per_image_s: Option<f64>,
    pub time_per_label_s: Option<f64>,
    pub per_click_index: Vec<ClickIndexStat>,
    pub final_review_s: Option<f64>,
}

pub fn timing_report(images: &[ImageTiming]) -> TimingReport {
    let total: f64 = images.iter().map(|i| i.duration_s).sum();
    let labels: usize = images.iter().map(|i| i.label_count).sum();
    let mut by_index: Vec<(f64, usize)> = Vec::new();
    for img in images {
        for (k, d) in img.per_click_times().into_iter().enumerate() {
            if by_index.len() <= k {
                by_index.resize(k + 1, (0.0, 0));
            }
            by_index[k].0 += d;
            by_index[k].1 += 1;
        }
    }
    let reviews: Vec<f64> = images.iter().filter_map(ImageTiming::final_review_s).collect();
    TimingReport {
        images: images.len(),
        labels,
        time_per_image_s: ratio(total, images.len() as f64),
        time_per_label_s: ratio(total, labels as f64),
        per_click_index: by_index
            .into_iter()
            .enumerate()
            .map(|(k, (sum, count))| ClickIndexStat {
                index: k + 1,
                mean_s: sum / count as f64,
                count,
            })
            .collect(),
        final_review_s: mean(&reviews),
    }
}

// ---------------------------------------------------------------------------
// Time allocation

/// Activity durations of one image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageActivity {
    pub duration_s: f64,
    pub speaking_s: f64,
    pub mouse_moving_s: f64,
    pub moving_during_speech_s: f64,
    pub consult_s: f64,
    pub consult_count: usize,
}

/// `speech` holds absolute speaking intervals of the image.
pub fn image_activity(events: &[Event], speech: &[(f64, f64)], moving_gap_s: f64) -> Result<ImageActivity, MetricsError> {
    let duration_s = events.last().map_or(0.0, |e| e.t);
    let speaking = interval_union(
        speech
            .iter()
            .map(|&(a, b)| (a.max(0.0), b.min(duration_s)))
            .collect(),
    );
    let moving = mouse_moving_intervals(events, moving_gap_s);
    let consult = consult_intervals(events)?;
    Ok(ImageActivity {
        duration_s,
        speaking_s: total_length(&speaking),
        mouse_moving_s: total_length(&moving),
        moving_during_speech_s: intersection_length(&moving, &speaking),
        consult_s: total_length(&consult),
        consult_count: consult.len(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeAllocation {
    pub images: usize,
    pub images_consulting: usize,
    pub total_s: f64,
    pub speaking_frac: Option<f64>,
    pub mouse_moving_frac: Option<f64>,
    pub mouse_moving_during_speech_frac: Option<f64>,
    pub consult_frac: Option<f64>,
    /// Share of images in which the class list was opened at least once.
    pub consult_rate: Option<f64>,
    /// Mean per-image consultation time over images that consulted.
    pub mean_consult_s: Option<f64>,
}

pub fn time_allocation(activities: &[ImageActivity]) -> TimeAllocation {
    let sum = |f: fn(&ImageActivity) -> f64| activities.iter().map(f).sum::<f64>();
    let total = sum(|a| a.duration_s);
    let speaking = sum(|a| a.speaking_s);
    let consulting: Vec<f64> = activities
        .iter()
        .filter(|a| a.consult_count > 0)
        .map(|a| a.consult_s)
        .collect();
    TimeAllocation {
        images: activities.len(),
        images_consulting: consulting.len(),
        total_s: total,
        speaking_frac: ratio(speaking, total),
        mouse_moving_frac: ratio(sum(|a| a.mouse_moving_s), total),
        mouse_moving_during_speech_frac: ratio(sum(|a| a.moving_during_speech_s), speaking),
        consult_frac: ratio(sum(|a| a.consult_s), total),
        consult_rate: ratio(consulting.len() as f64, activities.len() as f64),
        mean_consult_s: mean(&consulting),
    }
}

// ---------------------------------------------------------------------------
// Per-image evaluation and corpus report

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub moving_gap_s: f64,
    pub utterance_bin_s: f64,
    pub image_time_bin_s: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            moving_gap_s: DEFAULT_MOVING_GAP_S,
            utterance_bin_s: DEFAULT_UTTERANCE_BIN_S,
            image_time_bin_s: DEFAULT_IMAGE_TIME_BIN_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation {
    pub image_id: String,
    pub annotator_id: String,
    pub predicted_classes: BTreeSet<String>,
    pub gt_classes: BTreeSet<String>,
    pub click_outcomes: Vec<MaskTest>,
    pub timing: ImageTiming,
    pub per_click_times: Vec<f64>,
    pub mouse_path_px: f64,
    pub activity: ImageActivity,
    /// Speech duration attributed to each resolved click.
    pub utterance_durations: Vec<f64>,
    /// Rank correlation of clicked object area against click order.
    pub size_order_rho: Option<f64>,
}

/// Evaluates one processed session against its ground truth.
pub fn evaluate_image(
    session: &ImageSession,
    labeling: &ImageLabeling,
    gt: &GroundTruthImage,
    options: &ReportOptions,
) -> Result<ImageEvaluation, MetricsError> {
    let speech = labeling.speech_intervals();
    let activity = image_activity(&session.events, &speech, options.moving_gap_s)?;
    let click_times: Vec<f64> = clicks(&session.events).clicks.iter().map(|c| c.t).collect();
    let predicted = labeling.label_set();
    let timing = ImageTiming {
        duration_s: session.duration_s(),
        click_times,
        label_count: predicted.len(),
        last_speech_end_s: speech
            .iter()
            .map(|&(_, b)| b.min(session.duration_s()))
            .reduce(f64::max),
    };

    // area of the clicked instance vs. click order, resolved clicks only
    let (mut areas, mut order) = (Vec::new(), Vec::new());
    for a in &labeling.annotations {
        if a.flags.contains(&AnnotationFlag::Duplicate) {
            continue;
        }
        let Some(r) = &a.resolution else { continue };
        if let Some(inst) = gt.containing_instance(r.class.normalized(), (a.x, a.y)) {
            areas.push(inst.area());
            order.push(a.object_index as f64);
        }
    }

    Ok(ImageEvaluation {
        image_id: session.meta.image_id.clone(),
        annotator_id: session.meta.annotator_id.clone(),
        gt_classes: gt.class_set(),
        click_outcomes: click_outcomes(labeling, gt),
        per_click_times: timing.per_click_times(),
        mouse_path_px: mouse_path_length(&session.events),
        activity,
        utterance_durations: labeling
            .annotations
            .iter()
            .filter(|a| !a.transcription.speech.is_empty())
            .map(|a| a.transcription.speech.iter().map(|s| s.length_s()).sum())
            .collect(),
        size_order_rho: spearman_rank_correlation(&areas, &order),
        predicted_classes: predicted,
        timing,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub per_image_time: Vec<Bin>,
    pub utterance_duration: Vec<Bin>,
    pub per_click_index_time: Vec<ClickIndexStat>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    /// Spearman rho of ground-truth class count against annotation time.
    pub class_count_vs_time: Option<f64>,
    /// Median over images of the per-image rho of object area against click order.
    pub size_vs_order_median: Option<f64>,
    pub size_vs_order_images: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionAccuracy {
    pub recall_at_1: RecallAtK,
    pub recall_at_3: RecallAtK,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorBreakdown {
    pub images: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub time_per_image_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub images: usize,
    pub failures: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub counts: SetCounts,
    pub time_per_image_s: Option<f64>,
    pub time_per_label_s: Option<f64>,
    pub location_accuracy: LocationAccuracy,
    pub timing: TimingReport,
    pub time_allocation: TimeAllocation,
    pub mean_mouse_path_px: Option<f64>,
    pub histograms: Histograms,
    pub correlations: Correlations,
    /// Keyed by `with_hints` / `without_hints`.
    pub transcription: BTreeMap<String, TranscriptionAccuracy>,
    pub vocabulary_usage: Option<f64>,
    pub per_annotator: BTreeMap<String, AnnotatorBreakdown>,
}

/// Training records grouped by the phrase-hint condition of their transcriptions.
#[derive(Debug, Clone, Default)]
pub struct TrainingEvidence {
    pub with_hints: Vec<TrainingImageRecord>,
    pub without_hints: Vec<TrainingImageRecord>,
}

pub fn corpus_report(
    evaluations: &[ImageEvaluation],
    failures: usize,
    training: &TrainingEvidence,
    vocab: &Vocabulary,
    options: &ReportOptions,
) -> CorpusReport {
    let prf = corpus_prf(
        evaluations
            .iter()
            .map(|e| (&e.predicted_classes, &e.gt_classes)),
    );
    let timings: Vec<ImageTiming> = evaluations.iter().map(|e| e.timing.clone()).collect();
    let timing = timing_report(&timings);
    let activities: Vec<ImageActivity> = evaluations.iter().map(|e| e.activity).collect();

    let durations: Vec<f64> = evaluations.iter().map(|e| e.timing.duration_s).collect();
    let class_counts: Vec<f64> = evaluations.iter().map(|e| e.gt_classes.len() as f64).collect();
    let size_rhos: Vec<f64> = evaluations.iter().filter_map(|e| e.size_order_rho).collect();
    let utterances: Vec<f64> = evaluations
        .iter()
        .flat_map(|e| e.utterance_durations.iter().copied())
        .collect();
    let paths: Vec<f64> = evaluations.iter().map(|e| e.mouse_path_px).collect();

    let mut transcription = BTreeMap::new();
    for (name, records) in [("with_hints", &training.with_hints), ("without_hints", &training.without_hints)] {
        if !records.is_empty() {
            transcription.insert(
                name.to_string(),
                TranscriptionAccuracy {
                    recall_at_1: transcription_recall_at_k(records, 1),
                    recall_at_3: transcription_recall_at_k(records, 3),
                },
            );
        }
    }
    let all_training: Vec<TrainingImageRecord> = training
        .with_hints
        .iter()
        .chain(&training.without_hints)
        .cloned()
        .collect();

    let mut per_annotator: BTreeMap<String, Vec<&ImageEvaluation>> = BTreeMap::new();
    for e in evaluations {
        per_annotator.entry(e.annotator_id.clone()).or_default().push(e);
    }

    CorpusReport {
        images: evaluations.len(),
        failures,
        precision: prf.map(|(p, _)| p.precision),
        recall: prf.map(|(p, _)| p.recall),
        f1: prf.map(|(p, _)| p.f1),
        counts: prf.map(|(_, c)| c).unwrap_or_default(),
        time_per_image_s: timing.time_per_image_s,
        time_per_label_s: timing.time_per_label_s,
        location_accuracy: location_accuracy(evaluations.iter().flat_map(|e| e.click_outcomes.iter().copied())),
        histograms: Histograms {
            per_image_time: histogram(&durations, options.image_time_bin_s),
            utterance_duration: histogram(&utterances, options.utterance_bin_s),
            per_click_index_time: timing.per_click_index.clone(),
        },
        timing,
        time_allocation: time_allocation(&activities),
        mean_mouse_path_px: mean(&paths),
        correlations: Correlations {
            class_count_vs_time: spearman_rank_correlation(&class_counts, &durations),
            size_vs_order_median: median(&size_rhos),
            size_vs_order_images: size_rhos.len(),
        },
        transcription,
        vocabulary_usage: vocabulary_usage_rate(&all_training, vocab),
        per_annotator: per_annotator
            .into_iter()
            .map(|(id, evals)| {
                let (p, _) = corpus_prf(evals.iter().map(|e| (&e.predicted_classes, &e.gt_classes)))
                    .expect("annotator has at least one image");
                let total: f64 = evals.iter().map(|e| e.timing.duration_s).sum();
                (
                    id,
                    AnnotatorBreakdown {
                        images: evals.len(),
                        precision: p.precision,
                        recall: p.recall,
                        f1: p.f1,
                        time_per_image_s: total / evals.len() as f64,
                    },
                )
            })
            .collect(),
    }
}

/// Per-image table as CSV.
pub fn per_image_csv(evaluations: &[ImageEvaluation]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "image_id",
        "annotator_id",
        "duration_s",
        "predicted",
        "ground_truth",
        "true_positives",
        "hits",
        "misses",
        "ignored",
        "mouse_path_px",
        "speaking_s",
        "mouse_moving_s",
        "consult_s",
    ])
    .expect("in-memory csv");
    for e in evaluations {
        let loc = location_accuracy(e.click_outcomes.iter().copied());
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(";");
        w.write_record([
            e.image_id.clone(),
            e.annotator_id.clone(),
            e.timing.duration_s.to_string(),
            join(&e.predicted_classes),
            join(&e.gt_classes),
            e.predicted_classes.intersection(&e.gt_classes).count().to_string(),
            loc.hits.to_string(),
            loc.misses.to_string(),
            loc.ignored.to_string(),
            e.mouse_path_px.to_string(),
            e.activity.speaking_s.to_string(),
            e.activity.mouse_moving_s.to_string(),
            e.activity.consult_s.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}
