//! Matching of alarms to fault windows and detection metrics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::FaultWindow;

/// First alarm inside one fault window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub motor_id: String,
    pub onset: i64,
    pub failure: i64,
    pub alarm: i64,
    /// Minutes from onset to the alarm.
    pub time_to_detection: f64,
    /// Minutes from the alarm to failure.
    pub time_to_failure: f64,
}

/// Alarm and fault counts, additive over motors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchedOutcomes {
    pub true_alarms: usize,
    pub false_alarms: usize,
    pub detected: usize,
    pub missed: usize,
    pub detections: Vec<Detection>,
}

impl MatchedOutcomes {
    pub fn merge(&mut self, other: MatchedOutcomes) {
        self.true_alarms += other.true_alarms;
        self.false_alarms += other.false_alarms;
        self.detected += other.detected;
        self.missed += other.missed;
        self.detections.extend(other.detections);
    }

    pub fn faults(&self) -> usize {
        self.detected + self.missed
    }
}

/// Labels the alarms of one motor. An alarm at `t` is true when `t` lies in
/// some `(onset, failure]`, otherwise false; a fault without such an alarm is
/// missed. The first alarm in a window gives the detection times.
pub fn match_alarms(motor_id: &str, alarms: &[i64], faults: &[FaultWindow]) -> Result<MatchedOutcomes> {
    let mut windows: Vec<&FaultWindow> = faults.iter().collect();
    windows.sort_by_key(|f| f.onset);
    for pair in windows.windows(2) {
        if pair[1].onset < pair[0].failure {
            return Err(Error::OverlappingFaults(format!(
                "motor {motor_id}: windows ({}, {}] and ({}, {}] overlap",
                pair[0].onset, pair[0].failure, pair[1].onset, pair[1].failure
            )));
        }
    }
    let mut first: Vec<Option<i64>> = vec![None; windows.len()];
    let mut out = MatchedOutcomes::default();
    for &t in alarms {
        let k = windows.partition_point(|f| f.onset < t);
        let hit = k.checked_sub(1).filter(|&k| t <= windows[k].failure);
        match hit {
            Some(k) => {
                out.true_alarms += 1;
                if first[k].is_none_or(|a| t < a) {
                    first[k] = Some(t);
                }
            }
            None => out.false_alarms += 1,
        }
    }
    for (w, a) in windows.iter().zip(first) {
        match a {
            Some(alarm) => {
                out.detected += 1;
                out.detections.push(Detection {
                    motor_id: motor_id.to_string(),
                    onset: w.onset,
                    failure: w.failure,
                    alarm,
                    time_to_detection: (alarm - w.onset) as f64,
                    time_to_failure: (w.failure - alarm) as f64,
                });
            }
            None => out.missed += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "FP")]
    pub false_positives: usize,
    #[serde(rename = "FN")]
    pub false_negatives: usize,
    pub true_alarms: usize,
    pub detected: usize,
    pub precision: f64,
    pub recall: f64,
    pub median_ttd: Option<f64>,
    pub median_ttf: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub fn compute_metrics(outcomes: &MatchedOutcomes) -> MetricsReport {
    let alarms = outcomes.true_alarms + outcomes.false_alarms;
    let precision = if alarms == 0 { 1.0 } else { outcomes.true_alarms as f64 / alarms as f64 };
    let faults = outcomes.faults();
    let recall = if faults == 0 { 1.0 } else { outcomes.detected as f64 / faults as f64 };
    let ttd: Vec<f64> = outcomes.detections.iter().map(|d| d.time_to_detection).collect();
    let ttf: Vec<f64> = outcomes.detections.iter().map(|d| d.time_to_failure).collect();
    MetricsReport {
        false_positives: outcomes.false_alarms,
        false_negatives: outcomes.missed,
        true_alarms: outcomes.true_alarms,
        detected: outcomes.detected,
        precision,
        recall,
        median_ttd: median(&ttd),
        median_ttf: median(&ttf),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub metrics: MetricsReport,
}

/// Evaluates `evaluate` at every threshold, in parallel. Thresholds must be
/// sorted ascending.
pub fn threshold_sweep<F>(thresholds: &[f64], evaluate: F) -> Result<Vec<SweepPoint>>
where
    F: Fn(f64) -> Result<MatchedOutcomes> + Sync,
{
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Config("sweep thresholds must be sorted ascending".into()));
    }
    thresholds
        .par_iter()
        .map(|&threshold| {
            Ok(SweepPoint {
                threshold,
                metrics: compute_metrics(&evaluate(threshold)?),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub method: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub scenario: String,
    pub method: String,
    pub point: SweepPoint,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric_fields(m: &MetricsReport) -> [String; 6] {
    [
        m.false_positives.to_string(),
        m.false_negatives.to_string(),
        m.precision.to_string(),
        m.recall.to_string(),
        opt(m.median_ttd),
        opt(m.median_ttf),
    ]
}

const METRIC_HEADER: [&str; 6] = ["FP", "FN", "precision", "recall", "median_ttd", "median_ttf"];

pub fn write_report_csv<W: Write>(writer: W, rows: &[ReportRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["scenario", "method"];
    header.extend(METRIC_HEADER);
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.scenario.clone(), r.method.clone()];
        rec.extend(metric_fields(&r.metrics));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_curve_csv<W: Write>(writer: W, rows: &[CurveRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["scenario", "method", "threshold"];
    header.extend(METRIC_HEADER);
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.scenario.clone(), r.method.clone(), r.point.threshold.to_string()];
        rec.extend(metric_fields(&r.point.metrics));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_detections_csv<W: Write>(writer: W, rows: &[(String, String, Detection)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["scenario", "method", "motor_id", "onset", "alarm", "ttd", "ttf"])?;
    for (scenario, method, d) in rows {
        wtr.write_record([
            scenario.clone(),
            method.clone(),
            d.motor_id.clone(),
            d.onset.to_string(),
            d.alarm.to_string(),
            d.time_to_detection.to_string(),
            d.time_to_failure.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
