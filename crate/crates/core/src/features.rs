//! Model inputs derived from the operating point of each frame: raw and
//! EWMA-smoothed load, cooling temperatures and on/off switching times.

use serde::{Deserialize, Serialize};

use crate::data::{MotorSeries, OperatingPoint};
use crate::error::{Error, Result};

/// Half-life of the load smoothing, in samples (minutes).
pub const DEFAULT_FEATURE_HALF_LIFE: f64 = 30.0;

/// A motor counts as running while `|speed|` exceeds this many rpm.
pub const ON_SPEED_THRESHOLD: f64 = 1.0;

/// Names of the numeric features, in [`FrameFeatures::values`] order.
pub const FEATURE_NAMES: [&str; 10] = [
    "power",
    "power_ewma",
    "speed",
    "speed_ewma",
    "torque",
    "torque_ewma",
    "air_inlet",
    "water_cooling",
    "time_since_switch",
    "prev_state_duration",
];

/// Per-step weight on the history for an EWMA with the given half-life:
/// `(1/2)^(1/half_life)`.
pub fn history_weight(half_life: f64) -> f64 {
    0.5f64.powf(1.0 / half_life)
}

/// Exponentially weighted moving average, `current = (1 - a) x + a current`
/// with `a = history_weight(half_life)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwmaState {
    half_life: f64,
    alpha: f64,
    current: Option<f64>,
}

impl EwmaState {
    /// A fresh average that adopts its first observation as the initial value.
    pub fn new(half_life: f64) -> Result<Self> {
        if !(half_life >= 1.0) || !half_life.is_finite() {
            return Err(Error::Config(format!(
                "EWMA half-life must be a finite value >= 1, got {half_life}"
            )));
        }
        Ok(Self {
            half_life,
            alpha: history_weight(half_life),
            current: None,
        })
    }

    pub fn with_initial(half_life: f64, initial: f64) -> Result<Self> {
        let mut s = Self::new(half_life)?;
        s.current = Some(initial);
        Ok(s)
    }

    pub fn half_life(&self) -> f64 {
        self.half_life
    }

    pub fn current(&self) -> Option<f64> {
        self.current
    }

    /// Folds in one observation. Non-finite input leaves the state untouched.
    pub fn step(&mut self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        let next = match self.current {
            Some(prev) => (1.0 - self.alpha) * x + self.alpha * prev,
            None => x,
        };
        self.current = Some(next);
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SwitchFeatures {
    /// Samples since the last on/off change.
    pub time_since_switch: u64,
    /// Length of the completed preceding on/off run, 0 before the first change.
    pub prev_state_duration: u64,
}

/// Streaming on/off state tracker.
#[derive(Debug, Clone, Default)]
pub struct SwitchTracker {
    state: Option<bool>,
    run: u64,
    prev_run: u64,
}

impl SwitchTracker {
    pub fn step(&mut self, speed: f64) -> SwitchFeatures {
        let on = if speed.is_nan() {
            self.state.unwrap_or(false)
        } else {
            speed.abs() > ON_SPEED_THRESHOLD
        };
        match self.state {
            Some(prev) if prev == on => self.run += 1,
            Some(_) => {
                self.prev_run = self.run + 1;
                self.run = 0;
            }
            None => self.run = 0,
        }
        self.state = Some(on);
        SwitchFeatures {
            time_since_switch: self.run,
            prev_state_duration: self.prev_run,
        }
    }
}

pub fn derive_switch_features<I>(speeds: I) -> Vec<SwitchFeatures>
where
    I: IntoIterator<Item = f64>,
{
    let mut tracker = SwitchTracker::default();
    speeds.into_iter().map(|s| tracker.step(s)).collect()
}

/// Per-frame features shared by all sensors of that frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub power: f64,
    pub power_ewma: f64,
    pub speed: f64,
    pub speed_ewma: f64,
    pub torque: f64,
    pub torque_ewma: f64,
    pub air_inlet: f64,
    pub water_cooling: f64,
    pub time_since_switch: f64,
    pub prev_state_duration: f64,
}

impl FrameFeatures {
    pub fn values(&self) -> [f64; 10] {
        [
            self.power,
            self.power_ewma,
            self.speed,
            self.speed_ewma,
            self.torque,
            self.torque_ewma,
            self.air_inlet,
            self.water_cooling,
            self.time_since_switch,
            self.prev_state_duration,
        ]
    }
}

/// Model input for one (frame, sensor) pair. `sensor_id` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub frame: FrameFeatures,
    pub sensor_id: usize,
}

/// Streaming feature computation for one motor.
#[derive(Debug, Clone)]
pub struct FeatureBuilder {
    power: EwmaState,
    speed: EwmaState,
    torque: EwmaState,
    switches: SwitchTracker,
    nonfinite: u64,
}

impl FeatureBuilder {
    pub fn new(half_life: f64) -> Result<Self> {
        Ok(Self {
            power: EwmaState::new(half_life)?,
            speed: EwmaState::new(half_life)?,
            torque: EwmaState::new(half_life)?,
            switches: SwitchTracker::default(),
            nonfinite: 0,
        })
    }

    /// Number of non-finite inputs skipped by the smoothers so far.
    pub fn nonfinite_inputs(&self) -> u64 {
        self.nonfinite
    }

    pub fn push(&mut self, op: &OperatingPoint) -> FrameFeatures {
        let mut smooth = |state: &mut EwmaState, x: f64| match state.step(x) {
            Ok(v) => v,
            Err(_) => {
                self.nonfinite += 1;
                state.current().unwrap_or(f64::NAN)
            }
        };
        let power_ewma = smooth(&mut self.power, op.power);
        let speed_ewma = smooth(&mut self.speed, op.speed);
        let torque_ewma = smooth(&mut self.torque, op.torque);
        let sw = self.switches.step(op.speed);
        FrameFeatures {
            power: op.power,
            power_ewma,
            speed: op.speed,
            speed_ewma,
            torque: op.torque,
            torque_ewma,
            air_inlet: op.air_inlet,
            water_cooling: op.water_cooling,
            time_since_switch: sw.time_since_switch as f64,
            prev_state_duration: sw.prev_state_duration as f64,
        }
    }
}

/// Features of every frame of a series, in order.
pub fn build_frame_features(series: &MotorSeries, half_life: f64) -> Result<Vec<FrameFeatures>> {
    let mut builder = FeatureBuilder::new(half_life)?;
    Ok(series
        .operating_points()
        .iter()
        .map(|op| builder.push(op))
        .collect())
}

/// One feature vector per (frame, sensor), frames outermost.
pub fn build_feature_stream(series: &MotorSeries, half_life: f64) -> Result<Vec<FeatureVector>> {
    let sensors = series.sensors();
    Ok(build_frame_features(series, half_life)?
        .into_iter()
        .flat_map(|frame| (1..=sensors).map(move |sensor_id| FeatureVector { frame, sensor_id }))
        .collect())
}
