//! Streaming monitor: residuals, drift adaptation and anomaly detection per
//! time step, strictly causal.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anomaly::{AnomalyDetector, AnomalyParams};
use crate::data::MotorSeries;
use crate::drift::{AdaptDrift, AdaptorConfig, DriftEvent};
use crate::error::{Error, Result};
use crate::features::{build_frame_features, FrameFeatures, DEFAULT_FEATURE_HALF_LIFE};
use crate::predictor::PredictionSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    pub adaptor: AdaptorConfig,
    #[serde(default)]
    pub anomaly: AnomalyParams,
    #[serde(default = "default_half_life")]
    pub feature_half_life: f64,
    /// Record a per-step trace.
    #[serde(default)]
    pub trace: bool,
}

fn default_half_life() -> f64 {
    DEFAULT_FEATURE_HALF_LIFE
}

impl MonitorConfig {
    pub fn new(adaptor: AdaptorConfig, anomaly: AnomalyParams) -> Self {
        Self {
            adaptor,
            anomaly,
            feature_half_life: DEFAULT_FEATURE_HALF_LIFE,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub motor_id: String,
    pub time: i64,
    pub score: f64,
    /// 1-based sensor with the largest score; absent for temperature alarms
    /// on several sensors at once.
    pub sensor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub motor_id: String,
    pub detected_at: i64,
    pub applied_at: i64,
    pub adjustment_before: Vec<f64>,
    pub adjustment_after: Vec<f64>,
}

/// One sensor at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub timestamp: i64,
    pub sensor: usize,
    pub e: f64,
    pub eb: f64,
    pub bhat: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub alarm: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorOutput {
    pub motor_id: String,
    pub alarms: Vec<AlarmEvent>,
    pub drift_events: Vec<DriftRecord>,
    pub trace: Vec<TraceRow>,
    /// Missing residual components over the run.
    pub missing: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorStep {
    pub score: f64,
    pub alarm: bool,
    /// 0-based sensor attaining the score.
    pub argmax: Option<usize>,
}

/// Drift adaptor followed by the anomaly detector.
pub struct Monitor {
    adaptor: Box<dyn AdaptDrift>,
    detector: AnomalyDetector,
    adapted: Vec<f64>,
    events: Vec<DriftEvent>,
}

impl Monitor {
    pub fn new(width: usize, adaptor: &AdaptorConfig, anomaly: AnomalyParams) -> Result<Self> {
        Ok(Self {
            adaptor: adaptor.build(width)?,
            detector: AnomalyDetector::new(width, anomaly)?,
            adapted: vec![0.0; width],
            events: Vec::new(),
        })
    }

    pub fn step(&mut self, residuals: &[f64]) -> MonitorStep {
        if let Some(event) = self.adaptor.adapt(residuals, &mut self.adapted) {
            self.events.push(event);
        }
        let s = self.detector.step(&self.adapted);
        MonitorStep {
            score: s.score,
            alarm: s.alarm,
            argmax: s.argmax,
        }
    }

    /// Adapted residuals of the last step.
    pub fn adapted(&self) -> &[f64] {
        &self.adapted
    }

    pub fn adjustment(&self) -> &[f64] {
        self.adaptor.adjustment()
    }

    pub fn drift_events(&self) -> &[DriftEvent] {
        &self.events
    }

    pub fn detector(&self) -> &AnomalyDetector {
        &self.detector
    }

    /// Floating-point values carried between steps, event history excluded.
    pub fn state_len(&self) -> usize {
        self.adaptor.state_len() + self.detector.state_len() + self.adapted.len()
    }
}

/// Row-major residual matrix of `range`.
pub fn residual_matrix(
    series: &MotorSeries,
    frames: &[FrameFeatures],
    range: Range<usize>,
    source: &PredictionSource,
) -> Result<(Vec<f64>, u64)> {
    source.check(series)?;
    check_range(series, &range)?;
    let p = series.sensors();
    let mut out = vec![0.0; range.len() * p];
    let mut missing = 0;
    for (row, i) in out.chunks_exact_mut(p).zip(range) {
        missing += source.residuals(series, &frames[i], i, row) as u64;
    }
    Ok((out, missing))
}

/// Adapted residuals of a row-major raw residual matrix, plus the drift
/// events (step numbers are 1-based rows).
pub fn adapt_residuals(
    residuals: &[f64],
    width: usize,
    adaptor: &AdaptorConfig,
) -> Result<(Vec<f64>, Vec<DriftEvent>)> {
    let mut a = adaptor.build(width)?;
    let mut out = vec![0.0; residuals.len()];
    let mut events = Vec::new();
    for (e, o) in residuals.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        events.extend(a.adapt(e, o));
    }
    Ok((out, events))
}

/// Alarm rows (0-based) and their scores over a row-major adapted residual
/// matrix.
pub fn detect_anomalies(
    adapted: &[f64],
    width: usize,
    params: &AnomalyParams,
) -> Result<Vec<(usize, f64, Option<usize>)>> {
    let mut det = AnomalyDetector::new(width, params.clone())?;
    let mut alarms = Vec::new();
    for (row, e) in adapted.chunks_exact(width).enumerate() {
        let s = det.step(e);
        if s.alarm {
            alarms.push((row, s.score, s.argmax));
        }
    }
    Ok(alarms)
}

fn check_range(series: &MotorSeries, range: &Range<usize>) -> Result<()> {
    if range.start > range.end || range.end > series.len() {
        return Err(Error::Config(format!(
            "range {range:?} outside motor {} with {} samples",
            series.motor_id(),
            series.len()
        )));
    }
    Ok(())
}

/// Runs the full monitor over `range`. Features are built causally from the
/// start of the series.
pub fn run_monitor(
    series: &MotorSeries,
    range: Range<usize>,
    source: &PredictionSource,
    config: &MonitorConfig,
) -> Result<MonitorOutput> {
    let frames = build_frame_features(series, config.feature_half_life)?;
    run_monitor_with_features(series, &frames, range, source, config)
}

pub fn run_monitor_with_features(
    series: &MotorSeries,
    frames: &[FrameFeatures],
    range: Range<usize>,
    source: &PredictionSource,
    config: &MonitorConfig,
) -> Result<MonitorOutput> {
    source.check(series)?;
    check_range(series, &range)?;
    let p = series.sensors();
    let mut monitor = Monitor::new(p, &config.adaptor, config.anomaly.clone())?;
    let mut out = MonitorOutput {
        motor_id: series.motor_id().to_string(),
        ..MonitorOutput::default()
    };
    let mut e = vec![0.0; p];
    let start = range.start;
    for i in range {
        out.missing += source.residuals(series, &frames[i], i, &mut e) as u64;
        let step = monitor.step(&e);
        let timestamp = series.timestamp(i);
        if step.alarm {
            out.alarms.push(AlarmEvent {
                motor_id: out.motor_id.clone(),
                time: timestamp,
                score: step.score,
                sensor: step.argmax.map(|j| j + 1),
            });
        }
        if config.trace {
            let bhat = monitor.adjustment();
            for j in 0..p {
                out.trace.push(TraceRow {
                    timestamp,
                    sensor: j + 1,
                    e: e[j],
                    eb: monitor.adapted()[j],
                    bhat: bhat[j],
                    g: step.score,
                    alarm: step.alarm,
                });
            }
        }
    }
    let step_time = |step: u64| series.timestamp(start + step as usize - 1);
    out.drift_events = monitor
        .drift_events()
        .iter()
        .map(|ev| DriftRecord {
            motor_id: out.motor_id.clone(),
            detected_at: step_time(ev.detected_at),
            applied_at: step_time(ev.applied_at),
            adjustment_before: ev.adjustment_before.clone(),
            adjustment_after: ev.adjustment_after.clone(),
        })
        .collect();
    Ok(out)
}

/// Alarm rows (0-based within `range`) when any sensor reaches `limit`, with
/// the same dormancy after each alarm as the anomaly detector.
pub fn threshold_alarm_rows(
    series: &MotorSeries,
    range: Range<usize>,
    limit: f64,
    restart_delay: usize,
) -> Vec<(usize, f64, Option<usize>)> {
    let mut alarms = Vec::new();
    let mut resume = 0usize;
    for (row, i) in range.enumerate() {
        if row < resume {
            continue;
        }
        let hottest = series
            .temps(i)
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1));
        if let Some((j, &v)) = hottest {
            if v >= limit {
                alarms.push((row, v, Some(j)));
                resume = row + restart_delay + 1;
            }
        }
    }
    alarms
}

pub fn run_threshold_monitor(
    series: &MotorSeries,
    range: Range<usize>,
    limit: f64,
    restart_delay: usize,
) -> Result<MonitorOutput> {
    check_range(series, &range)?;
    let start = range.start;
    let alarms = threshold_alarm_rows(series, range, limit, restart_delay)
        .into_iter()
        .map(|(row, v, j)| AlarmEvent {
            motor_id: series.motor_id().to_string(),
            time: series.timestamp(start + row),
            score: v,
            sensor: j.map(|j| j + 1),
        })
        .collect();
    Ok(MonitorOutput {
        motor_id: series.motor_id().to_string(),
        alarms,
        ..MonitorOutput::default()
    })
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub fn write_trace_csv<W: Write>(writer: W, outputs: &[MonitorOutput]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["timestamp", "motor_id", "sensor", "e", "eb", "bhat", "G", "alarm"])?;
    for out in outputs {
        for r in &out.trace {
            wtr.write_record([
                r.timestamp.to_string(),
                out.motor_id.clone(),
                r.sensor.to_string(),
                fmt_float(r.e),
                fmt_float(r.eb),
                fmt_float(r.bhat),
                fmt_float(r.g),
                u8::from(r.alarm).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_alarms_csv(path: impl AsRef<Path>, outputs: &[MonitorOutput]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    wtr.write_record(["motor_id", "time", "score", "sensor"])?;
    for a in outputs.iter().flat_map(|o| &o.alarms) {
        wtr.write_record([
            a.motor_id.clone(),
            a.time.to_string(),
            a.score.to_string(),
            a.sensor.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_drift_events_csv(path: impl AsRef<Path>, outputs: &[MonitorOutput]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    wtr.write_record(["motor_id", "detected_at", "applied_at", "adjustment_before", "adjustment_after"])?;
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
    for d in outputs.iter().flat_map(|o| &o.drift_events) {
        wtr.write_record([
            d.motor_id.clone(),
            d.detected_at.to_string(),
            d.applied_at.to_string(),
            join(&d.adjustment_before),
            join(&d.adjustment_after),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
