//! Per-sensor adaptive recursive CUSUMs with a max-aggregated global score,
//! a threshold alarm and a restart delay after each alarm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_CHANGE: f64 = 30.0;
pub const DEFAULT_RESTART_DELAY: usize = 1440;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyParams {
    /// Smallest relevant change in mean, °C.
    #[serde(default = "default_min_change")]
    pub min_change: f64,
    /// Alarm threshold on the global score. Infinite (`null`) disables alarms.
    #[serde(default = "default_threshold", with = "unbounded")]
    pub threshold: f64,
    /// Samples to stay dormant after an alarm.
    #[serde(default = "default_restart_delay")]
    pub restart_delay: usize,
}

fn default_min_change() -> f64 {
    DEFAULT_MIN_CHANGE
}
fn default_threshold() -> f64 {
    f64::INFINITY
}
fn default_restart_delay() -> usize {
    DEFAULT_RESTART_DELAY
}

impl Default for AnomalyParams {
    fn default() -> Self {
        Self {
            min_change: DEFAULT_MIN_CHANGE,
            threshold: f64::INFINITY,
            restart_delay: DEFAULT_RESTART_DELAY,
        }
    }
}

impl AnomalyParams {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_change > 0.0) || !self.min_change.is_finite() {
            return Err(Error::Config(format!(
                "minimum change must be positive, got {}",
                self.min_change
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "anomaly threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.restart_delay == 0 {
            return Err(Error::Config("restart delay must be positive".into()));
        }
        Ok(())
    }
}

/// Thresholds where `null` stands for infinity.
pub(crate) mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Recursive CUSUM of one sensor.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SensorCusum {
    /// Score `z`.
    pub z: f64,
    /// Sum of the residuals since `z` last left zero.
    pub s: f64,
    /// Count matching `s`.
    pub n: u64,
    last: f64,
}

impl SensorCusum {
    /// Current change-size estimate, `max(s / n, rho)` with `0 / 0 = 0`.
    pub fn mean_estimate(&self, min_change: f64) -> f64 {
        let mean = if self.n == 0 { 0.0 } else { self.s / self.n as f64 };
        mean.max(min_change)
    }

    pub fn update(&mut self, residual: f64, min_change: f64) -> f64 {
        if self.z > 0.0 {
            self.s += self.last;
            self.n += 1;
        } else {
            self.s = 0.0;
            self.n = 0;
        }
        let mu = self.mean_estimate(min_change);
        self.z = (self.z + mu * residual - 0.5 * mu * mu).max(0.0);
        self.last = residual;
        self.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyStep {
    /// Global score `G_t` (before any reset in the same step).
    pub score: f64,
    pub alarm: bool,
    /// Sensor attaining the global score; `None` while dormant or all zero.
    pub argmax: Option<usize>,
}

/// Streaming anomaly detector for one motor.
#[derive(Debug, Clone)]
pub struct AnomalyDetector {
    params: AnomalyParams,
    sensors: Vec<SensorCusum>,
    t: u64,
    /// First step at which the detector runs again after an alarm.
    resume_at: u64,
    alarms: Vec<u64>,
    skipped: u64,
}

impl AnomalyDetector {
    pub fn new(width: usize, params: AnomalyParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            sensors: vec![SensorCusum::default(); width],
            t: 0,
            resume_at: 1,
            alarms: Vec::new(),
            skipped: 0,
        })
    }

    pub fn params(&self) -> &AnomalyParams {
        &self.params
    }

    pub fn sensors(&self) -> &[SensorCusum] {
        &self.sensors
    }

    /// Alarm steps (1-based) so far.
    pub fn alarms(&self) -> &[u64] {
        &self.alarms
    }

    /// Non-finite residual components skipped so far.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Floating-point values carried between steps, alarm history excluded.
    pub fn state_len(&self) -> usize {
        3 * self.sensors.len()
    }

    pub fn dormant(&self) -> bool {
        self.t + 1 < self.resume_at
    }

    pub fn step(&mut self, adapted: &[f64]) -> AnomalyStep {
        self.t += 1;
        if self.t < self.resume_at {
            return AnomalyStep {
                score: 0.0,
                alarm: false,
                argmax: None,
            };
        }
        let rho = self.params.min_change;
        let mut score = 0.0;
        let mut argmax = None;
        for (j, (cusum, &e)) in self.sensors.iter_mut().zip(adapted).enumerate() {
            if !e.is_finite() {
                self.skipped += 1;
            } else {
                cusum.update(e, rho);
            }
            if cusum.z > score {
                score = cusum.z;
                argmax = Some(j);
            }
        }
        let alarm = score > self.params.threshold;
        if alarm {
            self.alarms.push(self.t);
            self.sensors.iter_mut().for_each(|c| *c = SensorCusum::default());
            self.resume_at = self.t + self.params.restart_delay as u64 + 1;
        }
        AnomalyStep {
            score,
            alarm,
            argmax,
        }
    }
}

/// Global score trajectory of a residual stream with alarms disabled.
pub fn anomaly_scores<'a, I>(width: usize, min_change: f64, residuals: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let params = AnomalyParams {
        min_change,
        threshold: f64::INFINITY,
        restart_delay: 1,
    };
    let mut det = AnomalyDetector::new(width, params)?;
    Ok(residuals.into_iter().map(|e| det.step(e).score).collect())
}
