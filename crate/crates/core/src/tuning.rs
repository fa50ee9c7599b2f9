//! Threshold calibration from an acceptable number of false detections on
//! fault- and drift-free validation scores.
//!
//! The largest remaining peak is removed `q_val` times, each time together
//! with the surrounding run of scores above a low quantile; the peak found in
//! the last round is the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_REMOVAL_QUANTILE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedPeak {
    /// Index of the score sequence (motor) when pooling.
    pub segment: usize,
    pub index: usize,
    pub value: f64,
    /// Inclusive bounds of the removed run.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub threshold: f64,
    pub q_val: usize,
    pub removal_quantile: f64,
    /// Value of the removal quantile; expansion stops at or below it.
    pub stop_threshold: f64,
    pub peaks_removed: Vec<RemovedPeak>,
}

/// Empirical quantile with linear interpolation between order statistics.
/// Non-finite values are ignored; `None` when nothing remains.
pub fn empirical_quantile(values: impl IntoIterator<Item = f64>, prob: f64) -> Option<f64> {
    let mut sorted: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_unstable_by(f64::total_cmp);
    let pos = prob.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn tune_threshold(scores: &[f64], q_val: usize, removal_quantile: f64) -> Result<TuningResult> {
    tune_pooled(&[scores], q_val, removal_quantile)
}

/// Tunes one threshold over several score sequences; removal runs never
/// cross from one sequence into another.
pub fn tune_pooled<S: AsRef<[f64]>>(
    segments: &[S],
    q_val: usize,
    removal_quantile: f64,
) -> Result<TuningResult> {
    if q_val == 0 {
        return Err(Error::Tuning("q_val must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&removal_quantile) {
        return Err(Error::Tuning(format!(
            "removal quantile {removal_quantile} outside [0, 1]"
        )));
    }
    let stop = empirical_quantile(
        segments.iter().flat_map(|s| s.as_ref().iter().copied()),
        removal_quantile,
    )
    .ok_or_else(|| Error::Tuning("no finite validation scores".into()))?;

    let mut removed: Vec<Vec<bool>> = segments
        .iter()
        .map(|s| s.as_ref().iter().map(|v| !v.is_finite()).collect())
        .collect();
    let mut peaks = Vec::with_capacity(q_val);
    let mut threshold = f64::NAN;
    for round in 0..q_val {
        let mut best: Option<(usize, usize, f64)> = None;
        for (seg, scores) in segments.iter().enumerate() {
            for (i, &v) in scores.as_ref().iter().enumerate() {
                if !removed[seg][i] && best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((seg, i, v));
                }
            }
        }
        let (seg, index, value) = best.ok_or_else(|| {
            Error::Tuning(format!(
                "validation scores exhausted after {round} of {q_val} removals"
            ))
        })?;
        let scores = segments[seg].as_ref();
        let mask = &mut removed[seg];
        let mut start = index;
        while start > 0 && !mask[start - 1] && scores[start - 1] > stop {
            start -= 1;
        }
        let mut end = index;
        while end + 1 < scores.len() && !mask[end + 1] && scores[end + 1] > stop {
            end += 1;
        }
        mask[start..=end].iter_mut().for_each(|m| *m = true);
        peaks.push(RemovedPeak {
            segment: seg,
            index,
            value,
            start,
            end,
        });
        threshold = value;
    }
    Ok(TuningResult {
        threshold,
        q_val,
        removal_quantile,
        stop_threshold: stop,
        peaks_removed: peaks,
    })
}

/// Steps where the score rises above `threshold` from at or below it. A
/// sequence that starts above the threshold counts once.
pub fn count_upward_crossings(scores: &[f64], threshold: f64) -> usize {
    let mut prev_above = false;
    let mut count = 0;
    for &s in scores {
        let above = s > threshold;
        if above && !prev_above {
            count += 1;
        }
        prev_above = above;
    }
    count
}

/// Serialized calibration of one detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub detector: String,
    pub q_val: usize,
    pub quantile: f64,
    pub threshold: f64,
    pub peaks_removed: Vec<RemovedPeak>,
}

impl TuningReport {
    pub fn new(detector: impl Into<String>, result: &TuningResult) -> Self {
        Self {
            detector: detector.into(),
            q_val: result.q_val,
            quantile: result.removal_quantile,
            threshold: result.threshold,
            peaks_removed: result.peaks_removed.clone(),
        }
    }
}
