//! Temperature prediction and residuals.
//!
//! Any model implementing [`Predictor`] can drive the monitor. The shipped
//! [`LinearBaseline`] is an ordinary least-squares fit over the frame features
//! with one intercept per sensor, solved through the normal equations.

use std::fs;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{MotorSeries, SensorFrame};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FrameFeatures, FEATURE_NAMES};

pub trait Predictor: Send + Sync {
    /// Predicted temperature (°C) of `features.sensor_id`.
    fn predict(&self, features: &FeatureVector) -> f64;

    /// Number of sensors the model can predict, if bounded.
    fn sensors(&self) -> Option<usize> {
        None
    }
}

/// Linear model with slopes shared across sensors and per-sensor intercepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl LinearBaseline {
    pub fn new(weights: [f64; 10], intercepts: Vec<f64>) -> Self {
        Self {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: weights.to_vec(),
            intercepts,
        }
    }

    /// Checks that the model matches the feature layout of this crate.
    pub fn validate(&self) -> Result<()> {
        if self.feature_names.len() != FEATURE_NAMES.len()
            || self.feature_names.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b)
        {
            return Err(Error::Config(format!(
                "model features {:?} do not match expected {:?}",
                self.feature_names, FEATURE_NAMES
            )));
        }
        if self.weights.len() != FEATURE_NAMES.len() {
            return Err(Error::Config(format!(
                "model has {} weights for {} features",
                self.weights.len(),
                FEATURE_NAMES.len()
            )));
        }
        if self.intercepts.is_empty() {
            return Err(Error::Config("model has no sensor intercepts".into()));
        }
        Ok(())
    }

    pub fn predict_frame(&self, frame: &FrameFeatures, sensor_index: usize) -> f64 {
        let x = frame.values();
        let slope: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum();
        match self.intercepts.get(sensor_index) {
            Some(b) => slope + b,
            None => f64::NAN,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Predictor for LinearBaseline {
    fn predict(&self, features: &FeatureVector) -> f64 {
        match features.sensor_id.checked_sub(1) {
            Some(j) => self.predict_frame(&features.frame, j),
            None => f64::NAN,
        }
    }

    fn sensors(&self) -> Option<usize> {
        Some(self.intercepts.len())
    }
}

/// Least-squares fit of [`LinearBaseline`] to aligned feature rows and
/// targets. Rows with any non-finite value are skipped.
pub fn fit_linear(features: &[FeatureVector], targets: &[f64], sensors: usize) -> Result<LinearBaseline> {
    if features.len() != targets.len() {
        return Err(Error::Fit(format!(
            "{} feature rows for {} targets",
            features.len(),
            targets.len()
        )));
    }
    let rows = features.iter().zip(targets).filter_map(|(fv, &y)| {
        let x = fv.frame.values();
        let sensor = fv.sensor_id.checked_sub(1)?;
        (sensor < sensors && y.is_finite() && x.iter().all(|v| v.is_finite())).then_some((x, sensor, y))
    });
    NormalEquations::accumulate(rows, sensors)?.solve()
}

/// Fits the baseline on the frames of `range`, one row per (frame, sensor).
pub fn fit_on_range(
    series: &MotorSeries,
    frames: &[FrameFeatures],
    range: Range<usize>,
) -> Result<LinearBaseline> {
    let p = series.sensors();
    let rows = range.flat_map(|i| {
        let y = series.temps(i);
        let x = frames[i].values();
        (0..p).filter_map(move |j| {
            (y[j].is_finite() && x.iter().all(|v| v.is_finite())).then_some((x, j, y[j]))
        })
    });
    NormalEquations::accumulate(rows, p)?.solve()
}

const NUMERIC: usize = FEATURE_NAMES.len();

struct NormalEquations {
    dim: usize,
    sensors: usize,
    center: [f64; NUMERIC],
    scale: [f64; NUMERIC],
    gram: Vec<f64>,
    rhs: Vec<f64>,
    rows: usize,
}

impl NormalEquations {
    fn accumulate<I>(rows: I, sensors: usize) -> Result<Self>
    where
        I: Iterator<Item = ([f64; NUMERIC], usize, f64)> + Clone,
    {
        let mut sum = [0.0; NUMERIC];
        let mut count = 0usize;
        for (x, _, _) in rows.clone() {
            for (s, v) in sum.iter_mut().zip(x) {
                *s += v;
            }
            count += 1;
        }
        let dim = NUMERIC + sensors;
        if count < dim + 1 {
            return Err(Error::Fit(format!(
                "{count} usable rows for {dim} coefficients"
            )));
        }
        let center = sum.map(|s| s / count as f64);
        let mut sumsq = [0.0; NUMERIC];
        for (x, _, _) in rows.clone() {
            for k in 0..NUMERIC {
                sumsq[k] += (x[k] - center[k]).powi(2);
            }
        }
        // Columns are standardized; constant columns keep unit scale and a
        // zero weight.
        let mut scale = [1.0; NUMERIC];
        let mut constant = [false; NUMERIC];
        for k in 0..NUMERIC {
            let sd = (sumsq[k] / count as f64).sqrt();
            if sd > 0.0 {
                scale[k] = sd;
            } else {
                constant[k] = true;
            }
        }
        let mut gram = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        let mut z = [0.0; NUMERIC];
        for (x, sensor, y) in rows {
            for k in 0..NUMERIC {
                z[k] = (x[k] - center[k]) / scale[k];
            }
            for a in 0..NUMERIC {
                let row = &mut gram[a * dim..(a + 1) * dim];
                for b in 0..=a {
                    row[b] += z[a] * z[b];
                }
                row[NUMERIC + sensor] += z[a];
                rhs[a] += z[a] * y;
            }
            gram[(NUMERIC + sensor) * dim + NUMERIC + sensor] += 1.0;
            rhs[NUMERIC + sensor] += y;
        }
        // Mirror the lower triangle of the slope block and the slope/intercept block.
        for a in 0..dim {
            for b in (a + 1)..dim {
                let (lo, hi) = (a * dim + b, b * dim + a);
                if a < NUMERIC && b < NUMERIC {
                    gram[lo] = gram[hi];
                } else if a < NUMERIC {
                    gram[hi] = gram[lo];
                }
            }
        }
        for k in (0..NUMERIC).filter(|&k| constant[k]) {
            gram[k * dim + k] = 1.0;
        }
        Ok(Self {
            dim,
            sensors,
            center,
            scale,
            gram,
            rhs,
            rows: count,
        })
    }

    fn solve(self) -> Result<LinearBaseline> {
        let coef = cholesky_solve(&self.gram, &self.rhs, self.dim).ok_or_else(|| {
            Error::Fit(format!(
                "normal equations are rank deficient ({} rows, {} sensors)",
                self.rows, self.sensors
            ))
        })?;
        let mut weights = [0.0; NUMERIC];
        for k in 0..NUMERIC {
            weights[k] = coef[k] / self.scale[k];
        }
        let shift: f64 = weights.iter().zip(&self.center).map(|(w, m)| w * m).sum();
        let intercepts = coef[NUMERIC..].iter().map(|c| c - shift).collect();
        Ok(LinearBaseline::new(weights, intercepts))
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, `n x n`).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let tol = max_diag * 1e-14;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            let v = a[i * n + j] - dot;
            if i == j {
                if !(v > tol) {
                    return None;
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = v / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let dot: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - dot) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let dot: f64 = ((i + 1)..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - dot) / l[i * n + i];
    }
    Some(x)
}

/// Residuals `y - yhat` of one frame. Missing readings stay `NaN` and are
/// counted.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    pub values: Vec<f64>,
    pub missing: usize,
}

pub fn residual_step(
    predictor: &dyn Predictor,
    frame: &SensorFrame,
    features: &FrameFeatures,
) -> ResidualVector {
    let mut values = vec![0.0; frame.y.len()];
    let missing = residuals_into(predictor, &frame.y, features, &mut values);
    ResidualVector { values, missing }
}

pub(crate) fn residuals_into(
    predictor: &dyn Predictor,
    y: &[f64],
    features: &FrameFeatures,
    out: &mut [f64],
) -> usize {
    let mut missing = 0;
    for (j, (slot, &yj)) in out.iter_mut().zip(y).enumerate() {
        let fv = FeatureVector {
            frame: *features,
            sensor_id: j + 1,
        };
        *slot = yj - predictor.predict(&fv);
        if !slot.is_finite() {
            *slot = f64::NAN;
            missing += 1;
        }
    }
    missing
}

/// Where predictions come from when monitoring.
#[derive(Clone)]
pub enum PredictionSource {
    Model(Arc<dyn Predictor>),
    /// Use the series' own `yhat` columns.
    External,
}

impl std::fmt::Debug for PredictionSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredictionSource::Model(_) => f.write_str("Model(..)"),
            PredictionSource::External => f.write_str("External"),
        }
    }
}

impl PredictionSource {
    pub fn model(model: impl Predictor + 'static) -> Self {
        PredictionSource::Model(Arc::new(model))
    }

    pub(crate) fn check(&self, series: &MotorSeries) -> Result<()> {
        match self {
            PredictionSource::Model(m) => match m.sensors() {
                Some(p) if p != series.sensors() => Err(Error::Config(format!(
                    "predictor covers {p} sensors but motor {} has {}",
                    series.motor_id(),
                    series.sensors()
                ))),
                _ => Ok(()),
            },
            PredictionSource::External if !series.has_predictions() => Err(Error::Config(format!(
                "external predictions requested but motor {} has no yhat columns",
                series.motor_id()
            ))),
            PredictionSource::External => Ok(()),
        }
    }

    /// Residuals of frame `index`, written into `out`. Returns the number of
    /// missing components.
    pub fn residuals(
        &self,
        series: &MotorSeries,
        features: &FrameFeatures,
        index: usize,
        out: &mut [f64],
    ) -> usize {
        let y = series.temps(index);
        match self {
            PredictionSource::Model(m) => residuals_into(m.as_ref(), y, features, out),
            PredictionSource::External => {
                let yhat = series.predictions(index).unwrap_or(&[]);
                let mut missing = 0;
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = y[j] - yhat.get(j).copied().unwrap_or(f64::NAN);
                    if !slot.is_finite() {
                        *slot = f64::NAN;
                        missing += 1;
                    }
                }
                missing
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_frame(rng: &mut ChaCha8Rng) -> FrameFeatures {
        FrameFeatures {
            power: rng.random_range(0.0..6000.0),
            power_ewma: rng.random_range(0.0..6000.0),
            speed: rng.random_range(0.0..150.0),
            speed_ewma: rng.random_range(0.0..150.0),
            torque: rng.random_range(0.0..400.0),
            torque_ewma: rng.random_range(0.0..400.0),
            air_inlet: rng.random_range(20.0..40.0),
            water_cooling: rng.random_range(15.0..35.0),
            time_since_switch: rng.random_range(0.0..2000.0),
            prev_state_duration: rng.random_range(0.0..2000.0),
        }
    }

    fn rows(n: usize, sensors: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .flat_map(|_| {
                let frame = random_frame(&mut rng);
                (1..=sensors).map(move |sensor_id| FeatureVector { frame, sensor_id })
            })
            .collect()
    }

    const TRUE_WEIGHTS: [f64; 10] = [0.004, 0.01, -0.05, 0.2, 0.03, -0.02, 1.0, 0.4, 0.001, -0.002];

    #[test]
    fn exact_linear_targets_are_recovered() {
        let truth = LinearBaseline::new(TRUE_WEIGHTS, vec![10.0, 12.0, 9.5]);
        let fv = rows(400, 3, 1);
        let y: Vec<f64> = fv.iter().map(|f| truth.predict(f)).collect();
        let fit = fit_linear(&fv, &y, 3).unwrap();
        for (a, b) in fit.weights.iter().zip(&truth.weights) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        for (a, b) in fit.intercepts.iter().zip(&truth.intercepts) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_targets_with_zero_features() {
        let fv: Vec<FeatureVector> = (0..60)
            .map(|i| FeatureVector {
                frame: FrameFeatures::default(),
                sensor_id: 1 + i % 6,
            })
            .collect();
        let fit = fit_linear(&fv, &vec![5.0; 60], 6).unwrap();
        for b in &fit.intercepts {
            assert!((b - 5.0).abs() < 1e-12);
        }
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-12));
    }

    #[test]
    fn noisy_power_slope_is_consistent() {
        // y = 2 power + N(0, 0.1); the OLS slope has standard error ~0.1 / (sd(power) sqrt(n)).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let fv: Vec<FeatureVector> = (0..10_000)
            .map(|_| FeatureVector {
                frame: FrameFeatures {
                    power: rng.random_range(0.0..10.0),
                    ..FrameFeatures::default()
                },
                sensor_id: 1,
            })
            .collect();
        let y: Vec<f64> = fv.iter().map(|f| 2.0 * f.frame.power + noise.sample(&mut rng)).collect();
        let fit = fit_linear(&fv, &y, 1).unwrap();
        assert!((fit.weights[0] - 2.0).abs() < 0.01, "{}", fit.weights[0]);
    }

    #[test]
    fn training_residual_means_vanish_per_sensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let truth = LinearBaseline::new(TRUE_WEIGHTS, vec![1.0, 2.0, 3.0, 4.0]);
        let fv = rows(2000, 4, 9);
        let y: Vec<f64> = fv
            .iter()
            .map(|f| truth.predict(f) + noise.sample(&mut rng) + (f.frame.power / 1000.0).powi(2))
            .collect();
        let fit = fit_linear(&fv, &y, 4).unwrap();
        for sensor in 1..=4 {
            let (sum, n) = fv
                .iter()
                .zip(&y)
                .filter(|(f, _)| f.sensor_id == sensor)
                .fold((0.0, 0usize), |(s, n), (f, y)| (s + y - fit.predict(f), n + 1));
            assert!((sum / n as f64).abs() < 1e-8, "sensor {sensor}: {}", sum / n as f64);
        }
    }

    #[test]
    fn too_few_rows_is_fit_error() {
        let fv = rows(2, 1, 0);
        assert!(matches!(fit_linear(&fv, &[1.0, 2.0], 1), Err(Error::Fit(_))));
    }

    #[test]
    fn sensor_without_rows_is_rank_deficient() {
        let fv = rows(100, 1, 0);
        let y = vec![1.0; 100];
        assert!(matches!(fit_linear(&fv, &y, 2), Err(Error::Fit(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = LinearBaseline::new(TRUE_WEIGHTS, vec![1.0, 2.0]);
        let back = LinearBaseline::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert!(v.get("feature_names").is_some() && v.get("intercepts").is_some());
    }

    #[test]
    fn mismatched_feature_names_rejected() {
        let mut m = LinearBaseline::new(TRUE_WEIGHTS, vec![1.0]);
        m.feature_names[0] = "voltage".into();
        assert!(LinearBaseline::from_json(&m.to_json().unwrap()).is_err());
    }

    struct Oracle(Vec<f64>);

    impl Predictor for Oracle {
        fn predict(&self, f: &FeatureVector) -> f64 {
            self.0[f.sensor_id - 1]
        }
    }

    fn frame(y: Vec<f64>) -> SensorFrame {
        SensorFrame {
            timestamp: 0,
            motor_id: "m".into(),
            y,
            operating: Default::default(),
            yhat: None,
        }
    }

    #[test]
    fn exact_prediction_gives_zero_residuals() {
        let y = vec![80.0, 81.0, 82.5];
        let r = residual_step(&Oracle(y.clone()), &frame(y), &FrameFeatures::default());
        assert_eq!(r.values, vec![0.0; 3]);
        assert_eq!(r.missing, 0);
    }

    #[test]
    fn residual_is_observed_minus_predicted() {
        let r = residual_step(&Oracle(vec![90.0]), &frame(vec![97.0]), &FrameFeatures::default());
        assert_eq!(r.values, vec![7.0]);
    }

    #[test]
    fn residuals_shift_with_offset() {
        let p = LinearBaseline::new(TRUE_WEIGHTS, vec![3.0; 6]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let f = random_frame(&mut rng);
            let y: Vec<f64> = (0..6).map(|_| rng.random_range(20.0..120.0)).collect();
            let delta: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
            let shifted: Vec<f64> = y.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let base = residual_step(&p, &frame(y), &f);
            let moved = residual_step(&p, &frame(shifted), &f);
            for ((m, b), d) in moved.values.iter().zip(&base.values).zip(&delta) {
                assert!((m - b - d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn missing_reading_is_counted() {
        let r = residual_step(&Oracle(vec![1.0, 1.0]), &frame(vec![f64::NAN, 2.0]), &FrameFeatures::default());
        assert_eq!(r.missing, 1);
        assert!(r.values[0].is_nan());
        assert_eq!(r.values[1], 1.0);
    }
}
