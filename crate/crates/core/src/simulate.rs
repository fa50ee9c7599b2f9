//! Fault injection, drift scenarios and a seeded synthetic fleet.

use std::fs::File;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{MotorSeries, OperatingPoint};
use crate::error::{Error, Result};
use crate::features::{history_weight, FeatureBuilder, DEFAULT_FEATURE_HALF_LIFE, FEATURE_NAMES};
use crate::predictor::LinearBaseline;

pub const FAILURE_TEMPERATURE: f64 = 145.0;
pub const DEFAULT_SLOPE: f64 = 0.62;
pub const DEFAULT_MAX_DELAY: usize = 17;
/// Minimum fault-free spacing between faults: 48 hours.
pub const MIN_FAULT_GAP: usize = 2880;

/// Ground truth of one injected fault. Times are timestamps (minutes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultWindow {
    pub motor_id: String,
    pub onset: i64,
    pub failure: i64,
    /// 1-based sensor number.
    pub sensor: usize,
    pub slope: f64,
    pub delay: usize,
}

/// Linear overheating ramp seen by one sensor after a delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultModel {
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_max_delay")]
    pub max_delay: usize,
    #[serde(default = "default_failure_temperature")]
    pub failure_temperature: f64,
}

fn default_slope() -> f64 {
    DEFAULT_SLOPE
}
fn default_max_delay() -> usize {
    DEFAULT_MAX_DELAY
}
fn default_failure_temperature() -> f64 {
    FAILURE_TEMPERATURE
}

impl Default for FaultModel {
    fn default() -> Self {
        Self {
            slope: DEFAULT_SLOPE,
            max_delay: DEFAULT_MAX_DELAY,
            failure_temperature: FAILURE_TEMPERATURE,
        }
    }
}

impl FaultModel {
    /// Samples from onset to failure for a ramp starting at `start`.
    pub fn time_to_failure(&self, start: f64) -> usize {
        if start >= self.failure_temperature {
            return 0;
        }
        let mut k = ((self.failure_temperature - start) / self.slope).ceil().max(0.0) as usize;
        while k > 0 && start + self.slope * (k - 1) as f64 >= self.failure_temperature {
            k -= 1;
        }
        while start + self.slope * (k as f64) < self.failure_temperature {
            k += 1;
        }
        k
    }

    /// Upper bound on samples touched by one fault, for temperatures >= 0 °C.
    pub fn max_span(&self) -> usize {
        self.time_to_failure(0.0) + self.max_delay + 1
    }

    /// Replaces sensor `sensor` (0-based) from `onset + delay` on with the
    /// delayed ramp, held at the failure temperature once reached, up to and
    /// including `failure + delay`.
    pub fn inject(
        &self,
        series: &mut MotorSeries,
        onset: usize,
        sensor: usize,
        delay: usize,
    ) -> Result<FaultWindow> {
        if !(self.slope > 0.0) {
            return Err(Error::FaultRejected(format!("slope {} must be positive", self.slope)));
        }
        if delay > self.max_delay {
            return Err(Error::FaultRejected(format!(
                "delay {delay} exceeds maximum {}",
                self.max_delay
            )));
        }
        if onset >= series.len() || sensor >= series.sensors() {
            return Err(Error::FaultRejected(format!(
                "onset {onset} / sensor {sensor} outside series of {} x {}",
                series.len(),
                series.sensors()
            )));
        }
        let start = series.temps(onset)[sensor];
        if !start.is_finite() {
            return Err(Error::FaultRejected(format!(
                "no reading at onset {onset} for sensor {}",
                sensor + 1
            )));
        }
        let failure = onset + self.time_to_failure(start);
        if failure + delay >= series.len() {
            return Err(Error::FaultRejected(format!(
                "ramp from index {onset} would run past the series end"
            )));
        }
        for k in 0..=(failure - onset) {
            let latent = (start + self.slope * k as f64).min(self.failure_temperature);
            series.temps_mut(onset + k + delay)[sensor] = latent;
        }
        Ok(FaultWindow {
            motor_id: series.motor_id().to_string(),
            onset: series.timestamp(onset),
            failure: series.timestamp(failure),
            sensor: sensor + 1,
            slope: self.slope,
            delay,
        })
    }
}

/// [`FaultModel::inject`] with an explicit slope and the default limits.
pub fn inject_fault(
    series: &mut MotorSeries,
    onset: usize,
    sensor: usize,
    slope: f64,
    delay: usize,
) -> Result<FaultWindow> {
    FaultModel {
        slope,
        ..FaultModel::default()
    }
    .inject(series, onset, sensor, delay)
}

const MAX_RESTARTS: usize = 2_000;

/// Draws `n` sorted onsets uniformly in `range` with pairwise spacing of at
/// least `min_gap`, rejecting and redrawing conflicting candidates.
pub fn sample_fault_times<R: Rng + ?Sized>(
    range: Range<usize>,
    n: usize,
    min_gap: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let len = range.end.saturating_sub(range.start);
    if len == 0 || (n - 1).saturating_mul(min_gap) >= len {
        return Err(Error::Sampling(format!(
            "{n} faults with spacing {min_gap} do not fit in {len} samples"
        )));
    }
    let draws_per_fault = 1_000;
    for _ in 0..MAX_RESTARTS {
        let mut onsets: Vec<usize> = Vec::with_capacity(n);
        'faults: for _ in 0..n {
            for _ in 0..draws_per_fault {
                let candidate = rng.random_range(range.clone());
                let clear = onsets.iter().all(|&o| o.abs_diff(candidate) >= min_gap);
                if clear {
                    onsets.push(candidate);
                    continue 'faults;
                }
            }
            break;
        }
        if onsets.len() == n {
            onsets.sort_unstable();
            return Ok(onsets);
        }
    }
    Err(Error::Sampling(format!(
        "could not place {n} faults with spacing {min_gap} in {len} samples"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum DriftMode {
    /// The recorded drift is kept as is.
    Negative,
    /// The post-drift offset is sign-flipped.
    Positive,
    /// The drift is removed.
    None,
}

impl DriftMode {
    pub const ALL: [DriftMode; 3] = [DriftMode::Positive, DriftMode::None, DriftMode::Negative];

    pub fn name(self) -> &'static str {
        match self {
            DriftMode::Negative => "negative",
            DriftMode::Positive => "positive",
            DriftMode::None => "none",
        }
    }
}

impl std::str::FromStr for DriftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" => Ok(DriftMode::Negative),
            "positive" => Ok(DriftMode::Positive),
            "none" => Ok(DriftMode::None),
            other => Err(Error::Config(format!("unknown drift scenario `{other}`"))),
        }
    }
}

/// A recorded step drift of one motor and the scenario to apply to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub motor_id: String,
    pub drift_time: i64,
    pub mode: DriftMode,
    /// Per-sensor post-minus-pre mean temperature change, °C.
    pub delta: Vec<f64>,
}

/// Estimation windows around a drift: 30 days each side, skipping one day
/// on each side of the drift time.
pub const DELTA_WINDOW: usize = 30 * 1440;
pub const DELTA_GUARD: usize = 1440;

/// Post-drift minus pre-drift mean temperature per sensor.
pub fn estimate_drift_delta(series: &MotorSeries, drift_time: i64) -> Result<Vec<f64>> {
    let at = series.index_at_or_after(drift_time);
    let pre_end = at.checked_sub(DELTA_GUARD);
    let pre_start = pre_end.and_then(|e| e.checked_sub(DELTA_WINDOW));
    let post_start = at + DELTA_GUARD;
    let post_end = post_start + DELTA_WINDOW;
    let (pre_start, pre_end) = match (pre_start, pre_end) {
        (Some(s), Some(e)) if post_end <= series.len() => (s, e),
        _ => {
            return Err(Error::Estimation(format!(
                "motor {}: estimation windows around index {at} exceed the series ({} samples)",
                series.motor_id(),
                series.len()
            )))
        }
    };
    let mean = |range: Range<usize>, j: usize| {
        let (sum, n) = range
            .map(|i| series.temps(i)[j])
            .filter(|v| v.is_finite())
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    };
    (0..series.sensors())
        .map(|j| match (mean(pre_start..pre_end, j), mean(post_start..post_end, j)) {
            (Some(pre), Some(post)) => Ok(post - pre),
            _ => Err(Error::Estimation(format!(
                "motor {}: sensor {} has no readings in an estimation window",
                series.motor_id(),
                j + 1
            ))),
        })
        .collect()
}

impl DriftSpec {
    /// Builds a spec with `delta` estimated from the series.
    pub fn estimated(series: &MotorSeries, drift_time: i64, mode: DriftMode) -> Result<Self> {
        Ok(Self {
            motor_id: series.motor_id().to_string(),
            drift_time,
            mode,
            delta: estimate_drift_delta(series, drift_time)?,
        })
    }

    pub fn with_mode(&self, mode: DriftMode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }
}

/// Transforms all winding temperatures from the drift time on: unchanged for
/// the negative scenario, `-2 delta` for positive, `-delta` for none.
pub fn apply_drift_scenario(series: &mut MotorSeries, spec: &DriftSpec) -> Result<()> {
    if spec.delta.len() != series.sensors() {
        return Err(Error::Config(format!(
            "drift spec for {} has {} deltas, series has {} sensors",
            spec.motor_id,
            spec.delta.len(),
            series.sensors()
        )));
    }
    let factor = match spec.mode {
        DriftMode::Negative => return Ok(()),
        DriftMode::Positive => -2.0,
        DriftMode::None => -1.0,
    };
    let start = series.index_at_or_after(spec.drift_time);
    for i in start..series.len() {
        for (y, d) in series.temps_mut(i).iter_mut().zip(&spec.delta) {
            *y += factor * d;
        }
    }
    Ok(())
}

pub fn save_fault_csv(path: impl AsRef<Path>, faults: &[FaultWindow]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["motor_id", "onset", "failure", "sensor", "slope", "delay"])?;
    for f in faults {
        wtr.write_record([
            f.motor_id.clone(),
            f.onset.to_string(),
            f.failure.to_string(),
            f.sensor.to_string(),
            f.slope.to_string(),
            f.delay.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_fault_csv(path: impl AsRef<Path>) -> Result<Vec<FaultWindow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn save_drift_spec_csv(path: impl AsRef<Path>, specs: &[DriftSpec]) -> Result<()> {
    let path = path.as_ref();
    let sensors = specs.first().map_or(6, |s| s.delta.len());
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = vec!["motor_id".to_string(), "drift_time".into(), "mode".into()];
    header.extend((1..=sensors).map(|k| format!("delta{k}")));
    wtr.write_record(&header)?;
    for s in specs {
        let mut row = vec![s.motor_id.clone(), s.drift_time.to_string(), s.mode.name().into()];
        row.extend(s.delta.iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_drift_spec_csv(path: impl AsRef<Path>) -> Result<Vec<DriftSpec>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            message: format!("missing column `{name}`"),
        })
    };
    let (id, time, mode) = (column("motor_id")?, column("drift_time")?, column("mode")?);
    let deltas: Vec<usize> = (1..)
        .map_while(|k| headers.iter().position(|h| h == format!("delta{k}")))
        .collect();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| Error::Data {
            row,
            message: format!("bad {what}"),
        };
        out.push(DriftSpec {
            motor_id: record[id].to_string(),
            drift_time: record[time].parse().map_err(|_| bad("drift_time"))?,
            mode: record[mode].parse().map_err(|_| bad("mode"))?,
            delta: deltas
                .iter()
                .map(|&c| record[c].parse().map_err(|_| bad("delta")))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// Operating profile of the synthetic motors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatingProfile {
    pub rated_power_kw: f64,
    pub rated_speed_rpm: f64,
    pub mean_on_hours: f64,
    pub mean_off_hours: f64,
    /// Mean duration of a constant-load regime while running.
    pub mean_regime_hours: f64,
    /// Probability that a regime runs near full load.
    pub high_load_probability: f64,
    /// Relative power noise per minute.
    pub power_noise: f64,
}

impl Default for OperatingProfile {
    fn default() -> Self {
        Self {
            rated_power_kw: 6000.0,
            rated_speed_rpm: 150.0,
            mean_on_hours: 18.0,
            mean_off_hours: 6.0,
            mean_regime_hours: 3.0,
            high_load_probability: 0.4,
            power_noise: 0.02,
        }
    }
}

/// Linear thermal response of the windings to the model features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalProfile {
    /// °C per kW of smoothed power.
    pub load_gain: f64,
    pub air_gain: f64,
    pub water_gain: f64,
    pub base_offset: f64,
    /// Half-width of the uniform per-sensor offset spread, °C.
    pub sensor_offset_spread: f64,
}

impl Default for ThermalProfile {
    fn default() -> Self {
        Self {
            load_gain: 0.0145,
            air_gain: 1.0,
            water_gain: 0.3,
            base_offset: -15.0,
            sensor_offset_spread: 3.0,
        }
    }
}

/// Temperature components the linear model cannot explain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Disturbances {
    /// White measurement noise per sensor, °C.
    pub noise_sigma: f64,
    /// Stationary std of a slow random wander shared by all sensors, °C.
    pub wander_sigma: f64,
    /// Stationary std of the per-sensor part of the wander, °C.
    pub sensor_wander_sigma: f64,
    pub wander_half_life: f64,
    /// °C per kW of the difference between a slow and the feature smoothing
    /// of power: an unmodelled second thermal time constant.
    pub slow_mode_gain: f64,
    pub slow_mode_half_life: f64,
    /// Rate of transient heating excursions.
    pub excursions_per_day: f64,
    pub excursion_mean_amplitude: f64,
    pub excursion_mean_minutes: f64,
}

impl Default for Disturbances {
    fn default() -> Self {
        Self {
            noise_sigma: 0.5,
            wander_sigma: 4.0,
            sensor_wander_sigma: 1.0,
            wander_half_life: 720.0,
            slow_mode_gain: 0.002,
            slow_mode_half_life: 240.0,
            excursions_per_day: 0.5,
            excursion_mean_amplitude: 6.0,
            excursion_mean_minutes: 90.0,
        }
    }
}

impl Disturbances {
    pub fn none() -> Self {
        Self {
            noise_sigma: 0.0,
            wander_sigma: 0.0,
            sensor_wander_sigma: 0.0,
            slow_mode_gain: 0.0,
            excursions_per_day: 0.0,
            ..Self::default()
        }
    }
}

/// A step change of the winding temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftInjection {
    /// Days after the series start.
    pub day: f64,
    /// Mean step size, °C.
    pub magnitude: f64,
    /// Relative per-sensor variation of the step.
    #[serde(default)]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub motors: usize,
    pub days: f64,
    pub seed: u64,
    pub sensors: usize,
    pub start_timestamp: i64,
    pub operating: OperatingProfile,
    pub thermal: ThermalProfile,
    pub disturbances: Disturbances,
    pub drift: Option<DriftInjection>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            motors: 9,
            days: 60.0,
            seed: 1,
            sensors: 6,
            start_timestamp: 26_297_280,
            operating: OperatingProfile::default(),
            thermal: ThermalProfile::default(),
            disturbances: Disturbances::default(),
            drift: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.motors == 0 || self.sensors == 0 {
            return bad("synthetic fleet needs at least one motor and one sensor".into());
        }
        if !(self.days > 0.0) {
            return bad(format!("days must be positive, got {}", self.days));
        }
        let op = &self.operating;
        if !(op.mean_on_hours > 0.0 && op.mean_off_hours > 0.0 && op.mean_regime_hours > 0.0) {
            return bad("operating durations must be positive".into());
        }
        if !(0.0..=1.0).contains(&op.high_load_probability) {
            return bad("high_load_probability must be in [0, 1]".into());
        }
        let d = &self.disturbances;
        if [d.noise_sigma, d.wander_sigma, d.sensor_wander_sigma, d.excursions_per_day].iter().any(|v| *v < 0.0) {
            return bad("disturbance scales must be non-negative".into());
        }
        if !(d.wander_half_life >= 1.0 && d.slow_mode_half_life >= 1.0) {
            return bad("disturbance half-lives must be >= 1".into());
        }
        if let Some(drift) = &self.drift {
            if !(drift.day > 0.0 && drift.day < self.days) {
                return bad(format!("drift day {} outside (0, {})", drift.day, self.days));
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        (self.days * 1440.0).round() as usize
    }

    pub fn motor_id(index: usize) -> String {
        format!("motor-{:02}", index + 1)
    }

    fn motor_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        rng
    }

    /// Per-sensor offsets of motor `index`.
    fn sensor_offsets(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let spread = self.thermal.sensor_offset_spread;
        (0..self.sensors)
            .map(|_| {
                let u = if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 };
                self.thermal.base_offset + u
            })
            .collect()
    }

    /// The linear model that generated motor `index` before disturbances.
    pub fn ground_truth_model(&self, index: usize) -> LinearBaseline {
        let mut rng = self.motor_rng(index);
        let offsets = self.sensor_offsets(&mut rng);
        ground_truth(&self.thermal, offsets)
    }
}

fn ground_truth(thermal: &ThermalProfile, offsets: Vec<f64>) -> LinearBaseline {
    let mut w = [0.0; FEATURE_NAMES.len()];
    w[1] = thermal.load_gain;
    w[6] = thermal.air_gain;
    w[7] = thermal.water_gain;
    LinearBaseline::new(w, offsets)
}

#[derive(Debug, Clone)]
pub struct SyntheticFleet {
    pub series: Vec<MotorSeries>,
    /// Recorded drifts, in the negative (as-generated) mode.
    pub drift_specs: Vec<DriftSpec>,
}

/// First-order autoregressive wander with stationary std `sigma`.
struct Wander {
    phi: f64,
    innovation: f64,
    value: f64,
}

impl Wander {
    fn new(sigma: f64, half_life: f64, rng: &mut ChaCha8Rng) -> Self {
        let phi = history_weight(half_life);
        let innovation = sigma * (1.0 - phi * phi).sqrt();
        let value = if sigma > 0.0 {
            sigma * Normal::new(0.0, 1.0).unwrap().sample(rng)
        } else {
            0.0
        };
        Self { phi, innovation, value }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.innovation > 0.0 {
            let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
            self.value = self.phi * self.value + self.innovation * z;
        }
        self.value
    }
}

fn generate_motor(cfg: &SynthConfig, index: usize) -> Result<(MotorSeries, Option<DriftSpec>)> {
    let mut rng = cfg.motor_rng(index);
    let offsets = cfg.sensor_offsets(&mut rng);
    let model = ground_truth(&cfg.thermal, offsets);
    let op_cfg = &cfg.operating;
    let dist = &cfg.disturbances;
    let n = cfg.samples();
    let p = cfg.sensors;
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let on_len = Exp::new(1.0 / (op_cfg.mean_on_hours * 60.0)).unwrap();
    let off_len = Exp::new(1.0 / (op_cfg.mean_off_hours * 60.0)).unwrap();
    let regime_len = Exp::new(1.0 / (op_cfg.mean_regime_hours * 60.0)).unwrap();
    let draw_load = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(op_cfg.high_load_probability) {
            rng.random_range(0.88..1.02)
        } else {
            rng.random_range(0.15..0.85)
        }
    };

    let drift = cfg.drift.as_ref().map(|d| {
        let at = (d.day * 1440.0).round() as usize;
        let delta: Vec<f64> = (0..p)
            .map(|_| {
                let rel = if d.spread > 0.0 { rng.random_range(-d.spread..=d.spread) } else { 0.0 };
                d.magnitude * (1.0 + rel)
            })
            .collect();
        (at, delta)
    });
    let excursion_rate = dist.excursions_per_day / 1440.0;
    let excursion_amp = Exp::new(1.0 / dist.excursion_mean_amplitude.max(1e-9)).unwrap();
    let excursion_len = Exp::new(1.0 / dist.excursion_mean_minutes.max(1.0)).unwrap();

    let phase_air = rng.random_range(0.0..std::f64::consts::TAU);
    let phase_water = rng.random_range(0.0..std::f64::consts::TAU);
    let mut air_wander = Wander::new(1.0, 2880.0, &mut rng);
    let mut water_wander = Wander::new(0.5, 2880.0, &mut rng);
    let mut wander = Wander::new(dist.wander_sigma, dist.wander_half_life, &mut rng);
    let mut sensor_wander: Vec<Wander> = (0..p)
        .map(|_| Wander::new(dist.sensor_wander_sigma, dist.wander_half_life, &mut rng))
        .collect();

    let mut on = rng.random_bool(0.7);
    let mut state_left = if on { on_len.sample(&mut rng) } else { off_len.sample(&mut rng) }.max(30.0) as usize;
    let mut load = draw_load(&mut rng);
    let mut regime_left = regime_len.sample(&mut rng).max(20.0) as usize;
    let slow_alpha = history_weight(dist.slow_mode_half_life);
    let mut slow_power = 0.0;
    let mut fast_power = 0.0;
    let fast_alpha = history_weight(DEFAULT_FEATURE_HALF_LIFE);
    // Active excursion: (start, length, amplitude, per-sensor weights).
    let mut excursion: Option<(usize, usize, f64, Vec<f64>)> = None;

    let mut series = MotorSeries::with_capacity(SynthConfig::motor_id(index), p, n);
    let mut features = FeatureBuilder::new(DEFAULT_FEATURE_HALF_LIFE)?;
    let mut y = vec![0.0; p];
    for t in 0..n {
        if state_left == 0 {
            on = !on;
            state_left = if on { on_len.sample(&mut rng) } else { off_len.sample(&mut rng) }.max(30.0) as usize;
        }
        state_left -= 1;
        if regime_left == 0 {
            load = draw_load(&mut rng);
            regime_left = regime_len.sample(&mut rng).max(20.0) as usize;
        }
        regime_left -= 1;

        let (power, speed, torque) = if on {
            let noise = 1.0 + op_cfg.power_noise * std_normal.sample(&mut rng);
            let power = (load * op_cfg.rated_power_kw * noise).max(0.0);
            let speed = op_cfg.rated_speed_rpm * (power / op_cfg.rated_power_kw).cbrt();
            let torque = if speed > 0.0 {
                power * 60.0 / (std::f64::consts::TAU * speed)
            } else {
                0.0
            };
            (power, speed, torque)
        } else {
            (0.0, 0.0, 0.0)
        };
        let day = std::f64::consts::TAU * t as f64 / 1440.0;
        let air = 30.0 + 3.0 * (day + phase_air).sin() + air_wander.step(&mut rng);
        let water = 25.0 + 2.0 * (day + phase_water).sin() + water_wander.step(&mut rng)
            + 0.0005 * fast_power;
        let op = OperatingPoint {
            power,
            speed,
            torque,
            air_inlet: air,
            water_cooling: water,
        };
        let frame = features.push(&op);
        fast_power = (1.0 - fast_alpha) * power + fast_alpha * fast_power;
        slow_power = (1.0 - slow_alpha) * power + slow_alpha * slow_power;

        if excursion.is_none() && excursion_rate > 0.0 && rng.random_bool(excursion_rate.min(1.0)) {
            let len = excursion_len.sample(&mut rng).max(20.0) as usize;
            let amp = excursion_amp.sample(&mut rng);
            let weights = (0..p).map(|_| rng.random_range(0.6..1.0)).collect();
            excursion = Some((t, len, amp, weights));
        }
        let bump = match &excursion {
            Some((start, len, amp, weights)) => {
                let phase = (t - start) as f64 / *len as f64;
                let shape = (std::f64::consts::PI * phase).sin().powi(2);
                Some((amp * shape, weights))
            }
            None => None,
        };
        let common = wander.step(&mut rng) + dist.slow_mode_gain * (slow_power - frame.power_ewma);
        for (j, slot) in y.iter_mut().enumerate() {
            let mut disturbance = common + sensor_wander[j].step(&mut rng);
            if dist.noise_sigma > 0.0 {
                disturbance += dist.noise_sigma * std_normal.sample(&mut rng);
            }
            if let Some((b, w)) = &bump {
                disturbance += b * w[j];
            }
            if let Some((at, delta)) = &drift {
                if t >= *at {
                    disturbance += delta[j];
                }
            }
            *slot = model.predict_frame(&frame, j) + disturbance;
        }
        if let Some((start, len, _, _)) = &excursion {
            if t + 1 >= start + len {
                excursion = None;
            }
        }
        series.push_parts(cfg.start_timestamp + t as i64, &y, op, None)?;
    }
    let spec = match drift {
        Some((at, delta)) => {
            let drift_time = cfg.start_timestamp + at as i64;
            series.set_drift_times(vec![drift_time])?;
            Some(DriftSpec {
                motor_id: series.motor_id().to_string(),
                drift_time,
                mode: DriftMode::Negative,
                delta,
            })
        }
        None => None,
    };
    Ok((series, spec))
}

/// Generates the fleet described by `cfg`; motors are independent and
/// generated in parallel from per-motor random streams.
pub fn generate_synthetic_fleet(cfg: &SynthConfig) -> Result<SyntheticFleet> {
    use rayon::prelude::*;
    cfg.validate()?;
    let motors: Vec<_> = (0..cfg.motors)
        .into_par_iter()
        .map(|i| generate_motor(cfg, i))
        .collect::<Result<_>>()?;
    let mut fleet = SyntheticFleet {
        series: Vec::with_capacity(cfg.motors),
        drift_specs: Vec::new(),
    };
    for (series, spec) in motors {
        fleet.series.push(series);
        fleet.drift_specs.extend(spec);
    }
    Ok(fleet)
}
