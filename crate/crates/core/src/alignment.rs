//! Click-driven segmentation of a session recording.
//!
//! Click `i` at time `t_i` owns the audio interval `[max(0, t_i - delta), t_{i+1}]`;
//! the last click's interval runs to the end of the recording. Speech usually
//! starts slightly before the click, hence the lead time `delta`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DELTA_S: f64 = 0.5;

/// Segments shorter than this are still transcribed, but flagged.
pub const SHORT_SEGMENT_S: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("click {index} at {t} s lies outside the recording [0, {duration_s}]")]
    ClickOutsideRecording { index: usize, t: f64, duration_s: f64 },
    #[error("click {index} at {t} s precedes the previous click")]
    Unordered { index: usize, t: f64 },
    #[error("invalid lead time {0}")]
    InvalidDelta(f64),
    #[error("invalid recording duration {0}")]
    InvalidDuration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioSegment {
    pub object_index: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl AudioSegment {
    pub fn length_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn is_short(&self) -> bool {
        self.length_s() < SHORT_SEGMENT_S
    }
}

/// One segment per click, in click order.
///
/// Click times must be non-decreasing and within `[0, duration_s]`. Tied
/// clicks (or a final click at the very end with `delta_s = 0`) produce
/// zero-length segments; callers treat those as silent.
pub fn segment_recording(
    click_times: &[f64],
    duration_s: f64,
    delta_s: f64,
) -> Result<Vec<AudioSegment>, AlignmentError> {
    if !(delta_s.is_finite() && delta_s >= 0.0) {
        return Err(AlignmentError::InvalidDelta(delta_s));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(AlignmentError::InvalidDuration(duration_s));
    }
    for (index, &t) in click_times.iter().enumerate() {
        if !(t.is_finite() && (0.0..=duration_s).contains(&t)) {
            return Err(AlignmentError::ClickOutsideRecording { index, t, duration_s });
        }
        if index > 0 && t < click_times[index - 1] {
            return Err(AlignmentError::Unordered { index, t });
        }
    }
    let ends = click_times.iter().skip(1).copied().chain(std::iter::once(duration_s));
    Ok(click_times
        .iter()
        .zip(ends)
        .enumerate()
        .map(|(object_index, (&t, end_s))| AudioSegment {
            object_index,
            start_s: (t - delta_s).max(0.0),
            end_s,
        })
        .collect())
}
