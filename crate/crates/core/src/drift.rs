//! Drift adaptation of temperature residuals.
//!
//! Every adaptor keeps an additive per-sensor adjustment `b` and returns the
//! adapted residual `e - b`. [`CusumAdaptor`] re-estimates `b` on demand after
//! a lagged windowed-CUSUM drift detection; [`EwmaAdaptor`] tracks `b`
//! continuously as a lagged EWMA; [`NoAdapt`] passes residuals through.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::history_weight;

/// Window lengths of one to seven days, in minutes.
pub const DEFAULT_LOOKBACKS: [usize; 7] = [1440, 2880, 4320, 5760, 7200, 8640, 10080];
pub const DEFAULT_N_RETRAIN: usize = 400;
pub const DEFAULT_LAG: usize = 240;
pub const DEFAULT_EWMA_HALF_LIFE: f64 = 480.0;

/// Incremental sums are recomputed from the buffer this often.
pub const RECOMPUTE_INTERVAL: u64 = 100_000;

/// Trailing-window sums of a vector stream for a fixed set of window lengths.
#[derive(Debug, Clone)]
pub struct WindowedSums {
    width: usize,
    lookbacks: Vec<usize>,
    capacity: usize,
    /// Ring of the last `capacity` vectors, `width` values each.
    ring: Vec<f64>,
    head: usize,
    seen: u64,
    /// `sums[k * width + j]`: window `lookbacks[k]`, component `j`.
    sums: Vec<f64>,
    since_recompute: u64,
}

impl WindowedSums {
    pub fn new(width: usize, lookbacks: &[usize]) -> Result<Self> {
        let mut lookbacks = lookbacks.to_vec();
        lookbacks.sort_unstable();
        lookbacks.dedup();
        if lookbacks.is_empty() || lookbacks[0] == 0 {
            return Err(Error::Config(
                "window lengths must be a non-empty set of positive sample counts".into(),
            ));
        }
        let capacity = *lookbacks.last().unwrap();
        Ok(Self {
            width,
            capacity,
            ring: vec![0.0; capacity * width],
            head: 0,
            seen: 0,
            sums: vec![0.0; lookbacks.len() * width],
            lookbacks,
            since_recompute: 0,
        })
    }

    pub fn lookbacks(&self) -> &[usize] {
        &self.lookbacks
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// True once the longest window is full.
    pub fn full(&self) -> bool {
        self.seen >= self.capacity as u64
    }

    /// Value pushed `age` steps ago (`age = 1` is the latest).
    fn aged(&self, age: usize) -> &[f64] {
        let slot = (self.head + self.capacity - age) % self.capacity;
        &self.ring[slot * self.width..(slot + 1) * self.width]
    }

    pub fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.width);
        for (k, &n) in self.lookbacks.iter().enumerate() {
            let sums = k * self.width;
            if self.seen >= n as u64 {
                // The value leaving a window of length n was pushed n steps ago.
                let slot = (self.head + self.capacity - n) % self.capacity;
                let leaving = &self.ring[slot * self.width..(slot + 1) * self.width];
                for ((s, &v), &old) in self.sums[sums..sums + self.width].iter_mut().zip(values).zip(leaving) {
                    *s += v - old;
                }
            } else {
                for (s, &v) in self.sums[sums..sums + self.width].iter_mut().zip(values) {
                    *s += v;
                }
            }
        }
        self.ring[self.head * self.width..(self.head + 1) * self.width].copy_from_slice(values);
        self.head = (self.head + 1) % self.capacity;
        self.seen += 1;
        self.since_recompute += 1;
        if self.since_recompute >= RECOMPUTE_INTERVAL {
            self.recompute();
        }
    }

    /// Rebuilds every sum from the buffered values.
    pub fn recompute(&mut self) {
        for (k, &n) in self.lookbacks.iter().enumerate() {
            let filled = (self.seen.min(n as u64)) as usize;
            for j in 0..self.width {
                let mut s = 0.0;
                for age in (1..=filled).rev() {
                    s += self.aged(age)[j];
                }
                self.sums[k * self.width + j] = s;
            }
        }
        self.since_recompute = 0;
    }

    /// Sum over the last `lookbacks()[k]` values of component `j` (fewer while
    /// the window is filling).
    pub fn sum(&self, k: usize, j: usize) -> f64 {
        self.sums[k * self.width + j]
    }

    /// Global drift score: sum over components of the max over windows of
    /// `|S| / sqrt(n)`. `None` until the longest window is full.
    pub fn cusum_score(&self) -> Option<f64> {
        if !self.full() {
            return None;
        }
        let mut total = 0.0;
        for j in 0..self.width {
            total += self.component_score(j);
        }
        Some(total)
    }

    fn component_score(&self, j: usize) -> f64 {
        self.lookbacks
            .iter()
            .enumerate()
            .map(|(k, &n)| self.sum(k, j).abs() / (n as f64).sqrt())
            .fold(0.0, f64::max)
    }

    /// Values held in the ring and the sums.
    pub fn state_len(&self) -> usize {
        self.ring.len() + self.sums.len()
    }

    /// Per-component scores, when all windows are full.
    pub fn component_scores(&self) -> Option<Vec<f64>> {
        self.full()
            .then(|| (0..self.width).map(|j| self.component_score(j)).collect())
    }
}

/// A completed re-estimation of the drift adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    /// Step (1-based sample count) at which the drift was detected.
    pub detected_at: u64,
    /// Step at which the new adjustment took effect.
    pub applied_at: u64,
    pub adjustment_before: Vec<f64>,
    pub adjustment_after: Vec<f64>,
}

/// The drift-adaptation step of the monitor.
pub trait AdaptDrift: Send {
    /// Consumes raw residuals `e_t` and writes adapted residuals into `out`.
    /// `NaN` marks a missing component; it stays `NaN` in `out`.
    fn adapt(&mut self, residuals: &[f64], out: &mut [f64]) -> Option<DriftEvent>;

    /// Current adjustment vector `b_t`.
    fn adjustment(&self) -> &[f64];

    /// Non-finite residual components seen so far.
    fn nonfinite(&self) -> u64 {
        0
    }

    /// Floating-point values carried between steps, event history excluded.
    fn state_len(&self) -> usize {
        self.adjustment().len()
    }
}

fn subtract(residuals: &[f64], adjustment: &[f64], out: &mut [f64]) {
    for ((o, &e), &b) in out.iter_mut().zip(residuals).zip(adjustment) {
        *o = e - b;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoAdapt {
    width: usize,
}

static ZEROS: [f64; 64] = [0.0; 64];

impl NoAdapt {
    pub fn new(width: usize) -> Self {
        Self { width }
    }
}

impl AdaptDrift for NoAdapt {
    fn adapt(&mut self, residuals: &[f64], out: &mut [f64]) -> Option<DriftEvent> {
        out.copy_from_slice(residuals);
        None
    }

    fn adjustment(&self) -> &[f64] {
        &ZEROS[..self.width.min(ZEROS.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CusumAdaptorParams {
    #[serde(default = "default_n_retrain")]
    pub n_retrain: usize,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default = "default_lookbacks")]
    pub lookbacks: Vec<usize>,
    /// Drift detection threshold on the global score.
    #[serde(default = "default_drift_threshold", with = "crate::anomaly::unbounded")]
    pub threshold: f64,
}

fn default_n_retrain() -> usize {
    DEFAULT_N_RETRAIN
}
fn default_lag() -> usize {
    DEFAULT_LAG
}
fn default_lookbacks() -> Vec<usize> {
    DEFAULT_LOOKBACKS.to_vec()
}
fn default_drift_threshold() -> f64 {
    f64::INFINITY
}

impl Default for CusumAdaptorParams {
    fn default() -> Self {
        Self {
            n_retrain: DEFAULT_N_RETRAIN,
            lag: DEFAULT_LAG,
            lookbacks: DEFAULT_LOOKBACKS.to_vec(),
            threshold: f64::INFINITY,
        }
    }
}

impl CusumAdaptorParams {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_retrain <= self.lag {
            return Err(Error::Config(format!(
                "CUSUM adaptor needs n_retrain > lag, got {} <= {}",
                self.n_retrain, self.lag
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "drift threshold must be positive, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    detected_at: u64,
    apply_at: u64,
}

/// On-demand adaptor: detects drift with a lagged windowed CUSUM on the
/// adapted residuals and, `n_retrain - lag` steps after a detection at `d`,
/// sets `b` to the mean raw residual over `(d - lag, d - lag + n_retrain]`.
#[derive(Debug, Clone)]
pub struct CusumAdaptor {
    params: CusumAdaptorParams,
    width: usize,
    t: u64,
    adapted_sums: WindowedSums,
    raw_sums: WindowedSums,
    /// Unlagged scores of the last `lag + 1` steps, newest at the back.
    scores: VecDeque<Option<f64>>,
    detections: Vec<u64>,
    pending: Option<Pending>,
    adjustment: Vec<f64>,
    clean: Vec<f64>,
    nonfinite: u64,
}

impl CusumAdaptor {
    pub fn new(width: usize, params: CusumAdaptorParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            adapted_sums: WindowedSums::new(width, &params.lookbacks)?,
            raw_sums: WindowedSums::new(width, &[params.n_retrain])?,
            scores: VecDeque::with_capacity(params.lag + 1),
            width,
            t: 0,
            detections: Vec::new(),
            pending: None,
            adjustment: vec![0.0; width],
            clean: vec![0.0; width],
            nonfinite: 0,
            params,
        })
    }

    pub fn params(&self) -> &CusumAdaptorParams {
        &self.params
    }

    /// Detection steps so far.
    pub fn detections(&self) -> &[u64] {
        &self.detections
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Unlagged global score of the latest step.
    pub fn drift_score(&self) -> Option<f64> {
        self.scores.back().copied().flatten()
    }

    /// Score from `lag` steps ago, the quantity compared to the threshold.
    pub fn lagged_score(&self) -> Option<f64> {
        if self.scores.len() == self.params.lag + 1 {
            self.scores.front().copied().flatten()
        } else {
            None
        }
    }

    pub fn windowed_sums(&self) -> &WindowedSums {
        &self.adapted_sums
    }

    fn dormant(&self) -> bool {
        self.detections
            .last()
            .is_some_and(|&d| self.t - d <= self.params.n_retrain as u64)
    }
}

impl AdaptDrift for CusumAdaptor {
    fn adapt(&mut self, residuals: &[f64], out: &mut [f64]) -> Option<DriftEvent> {
        self.t += 1;
        for (c, &e) in self.clean.iter_mut().zip(residuals) {
            *c = if e.is_finite() {
                e
            } else {
                self.nonfinite += 1;
                0.0
            };
        }
        self.raw_sums.push(&self.clean);

        let mut event = None;
        if let Some(p) = self.pending.filter(|p| p.apply_at == self.t) {
            let before = self.adjustment.clone();
            let n = self.params.n_retrain as f64;
            for j in 0..self.width {
                self.adjustment[j] = self.raw_sums.sum(0, j) / n;
            }
            event = Some(DriftEvent {
                detected_at: p.detected_at,
                applied_at: self.t,
                adjustment_before: before,
                adjustment_after: self.adjustment.clone(),
            });
            self.pending = None;
        }

        subtract(residuals, &self.adjustment, out);
        for (c, &b) in self.clean.iter_mut().zip(&self.adjustment) {
            *c -= b;
        }
        // Missing components contribute nothing to the windows.
        for (c, &e) in self.clean.iter_mut().zip(residuals) {
            if !e.is_finite() {
                *c = 0.0;
            }
        }
        self.adapted_sums.push(&self.clean);

        if self.scores.len() == self.params.lag + 1 {
            self.scores.pop_front();
        }
        self.scores.push_back(self.adapted_sums.cusum_score());

        if !self.dormant() {
            if let Some(score) = self.lagged_score() {
                if score > self.params.threshold {
                    self.detections.push(self.t);
                    self.pending = Some(Pending {
                        detected_at: self.t,
                        apply_at: self.t + (self.params.n_retrain - self.params.lag) as u64,
                    });
                }
            }
        }
        event
    }

    fn adjustment(&self) -> &[f64] {
        &self.adjustment
    }

    fn nonfinite(&self) -> u64 {
        self.nonfinite
    }

    fn state_len(&self) -> usize {
        self.adapted_sums.state_len()
            + self.raw_sums.state_len()
            + self.scores.len()
            + self.adjustment.len()
            + self.clean.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EwmaAdaptorParams {
    #[serde(default = "default_ewma_half_life")]
    pub half_life: f64,
    #[serde(default = "default_lag")]
    pub lag: usize,
}

fn default_ewma_half_life() -> f64 {
    DEFAULT_EWMA_HALF_LIFE
}

impl Default for EwmaAdaptorParams {
    fn default() -> Self {
        Self {
            half_life: DEFAULT_EWMA_HALF_LIFE,
            lag: DEFAULT_LAG,
        }
    }
}

/// Continuous adaptor: `b_t` is an EWMA (zero-initialized, new-sample weight
/// `1 - (1/2)^(1/half_life)`) of the residual stream delayed by `lag`.
#[derive(Debug, Clone)]
pub struct EwmaAdaptor {
    params: EwmaAdaptorParams,
    weight: f64,
    delayed: VecDeque<Vec<f64>>,
    adjustment: Vec<f64>,
    nonfinite: u64,
}

impl EwmaAdaptor {
    pub fn new(width: usize, params: EwmaAdaptorParams) -> Result<Self> {
        if !(params.half_life >= 1.0) || !params.half_life.is_finite() {
            return Err(Error::Config(format!(
                "EWMA adaptor half-life must be >= 1, got {}",
                params.half_life
            )));
        }
        Ok(Self {
            weight: 1.0 - history_weight(params.half_life),
            delayed: VecDeque::with_capacity(params.lag + 1),
            adjustment: vec![0.0; width],
            nonfinite: 0,
            params,
        })
    }

    pub fn params(&self) -> &EwmaAdaptorParams {
        &self.params
    }
}

impl AdaptDrift for EwmaAdaptor {
    fn adapt(&mut self, residuals: &[f64], out: &mut [f64]) -> Option<DriftEvent> {
        self.nonfinite += residuals.iter().filter(|e| !e.is_finite()).count() as u64;
        let mut entry = if self.delayed.len() > self.params.lag {
            self.delayed.pop_front().unwrap()
        } else {
            Vec::with_capacity(residuals.len())
        };
        entry.clear();
        entry.extend_from_slice(residuals);
        self.delayed.push_back(entry);
        if self.delayed.len() > self.params.lag {
            let lagged = &self.delayed[0];
            for (b, &e) in self.adjustment.iter_mut().zip(lagged) {
                if e.is_finite() {
                    *b += self.weight * (e - *b);
                }
            }
        }
        subtract(residuals, &self.adjustment, out);
        None
    }

    fn adjustment(&self) -> &[f64] {
        &self.adjustment
    }

    fn nonfinite(&self) -> u64 {
        self.nonfinite
    }

    fn state_len(&self) -> usize {
        self.delayed.iter().map(Vec::len).sum::<usize>() + self.adjustment.len()
    }
}

/// Adaptor selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AdaptorConfig {
    Cusum(CusumAdaptorParams),
    Ewma(EwmaAdaptorParams),
    None,
}

impl AdaptorConfig {
    pub fn build(&self, width: usize) -> Result<Box<dyn AdaptDrift>> {
        Ok(match self {
            AdaptorConfig::Cusum(p) => Box::new(CusumAdaptor::new(width, p.clone())?),
            AdaptorConfig::Ewma(p) => Box::new(EwmaAdaptor::new(width, p.clone())?),
            AdaptorConfig::None => Box::new(NoAdapt::new(width)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AdaptorConfig::Cusum(_) => "cusum",
            AdaptorConfig::Ewma(_) => "ewma",
            AdaptorConfig::None => "none",
        }
    }
}

/// Unlagged drift scores of a residual stream with no adaptation, one entry
/// per step once the longest window is full. Used to tune the threshold.
pub fn drift_scores<'a, I>(width: usize, lookbacks: &[usize], residuals: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut sums = WindowedSums::new(width, lookbacks)?;
    let mut clean = vec![0.0; width];
    let mut out = Vec::new();
    for e in residuals {
        for (c, &v) in clean.iter_mut().zip(e) {
            *c = if v.is_finite() { v } else { 0.0 };
        }
        sums.push(&clean);
        if let Some(s) = sums.cusum_score() {
            out.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn brute_window_sum(history: &[Vec<f64>], n: usize, j: usize) -> f64 {
        history[history.len().saturating_sub(n)..].iter().map(|v| v[j]).sum()
    }

    #[test]
    fn zero_residuals_score_zero() {
        let mut s = WindowedSums::new(3, &[5, 10]).unwrap();
        for _ in 0..20 {
            s.push(&[0.0; 3]);
        }
        assert_eq!(s.cusum_score(), Some(0.0));
    }

    #[test]
    fn score_undefined_until_windows_full() {
        let mut s = WindowedSums::new(1, &[3, 5]).unwrap();
        for _ in 0..4 {
            s.push(&[1.0]);
            assert_eq!(s.cusum_score(), None);
        }
        s.push(&[1.0]);
        assert!(s.cusum_score().is_some());
    }

    #[test]
    fn constant_residual_score_is_c_sqrt_n() {
        let history = vec![vec![1.0]; 1440];
        let brute = brute_window_sum(&history, 1440, 0) / 1440f64.sqrt();
        assert!((brute - 37.947_331_922_020_55).abs() < 1e-9);
        let mut s = WindowedSums::new(1, &[1440]).unwrap();
        for v in &history {
            s.push(v);
        }
        assert!((s.cusum_score().unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn six_sensors_at_minus_seven() {
        let mut s = WindowedSums::new(6, &[1440]).unwrap();
        let history = vec![vec![-7.0; 6]; 1500];
        for v in &history {
            s.push(v);
        }
        let brute: f64 = (0..6)
            .map(|j| brute_window_sum(&history, 1440, j).abs() / 1440f64.sqrt())
            .sum();
        assert!((brute - 1593.7879407248633).abs() < 1e-6);
        assert!((s.cusum_score().unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn score_is_invariant_to_sensor_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut a = WindowedSums::new(4, &[10, 30]).unwrap();
        let mut b = WindowedSums::new(4, &[10, 30]).unwrap();
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| normal.sample(&mut rng)).collect();
            a.push(&v);
            b.push(&[v[2], v[0], v[3], v[1]]);
        }
        let (sa, sb) = (a.cusum_score().unwrap(), b.cusum_score().unwrap());
        assert!((sa - sb).abs() < 1e-12);
    }

    #[test]
    fn recompute_matches_incremental() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let normal = Normal::new(0.0, 3.0).unwrap();
        let mut s = WindowedSums::new(2, &[7, 19, 64]).unwrap();
        for _ in 0..500 {
            let v: Vec<f64> = (0..2).map(|_| normal.sample(&mut rng)).collect();
            s.push(&v);
        }
        let before = s.sums.clone();
        s.recompute();
        for (a, b) in before.iter().zip(&s.sums) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn small_params(threshold: f64) -> CusumAdaptorParams {
        CusumAdaptorParams {
            n_retrain: 40,
            lag: 10,
            lookbacks: vec![50, 100],
            threshold,
        }
    }

    #[test]
    fn params_require_retrain_beyond_lag() {
        let p = CusumAdaptorParams {
            n_retrain: 10,
            lag: 10,
            ..small_params(1.0)
        };
        assert!(CusumAdaptor::new(1, p).is_err());
        assert!(CusumAdaptor::new(1, small_params(0.0)).is_err());
    }

    #[test]
    fn no_detection_is_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut a = CusumAdaptor::new(3, small_params(1e9)).unwrap();
        let mut out = [0.0; 3];
        for _ in 0..1000 {
            let e: Vec<f64> = (0..3).map(|_| normal.sample(&mut rng)).collect();
            assert!(a.adapt(&e, &mut out).is_none());
            assert_eq!(out.as_slice(), e.as_slice());
        }
        assert!(a.detections().is_empty());
        assert_eq!(a.adjustment(), &[0.0; 3]);
    }

    #[test]
    fn step_drift_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let params = CusumAdaptorParams::with_threshold(60.0);
        let mut a = CusumAdaptor::new(2, params).unwrap();
        let t0 = 12_000;
        let mut out = [0.0; 2];
        let mut post_drift = Vec::new();
        let mut first_event = None;
        for t in 0..(t0 + 6000) {
            let shift = if t >= t0 { -7.0 } else { 0.0 };
            let e = [shift + normal.sample(&mut rng), shift + normal.sample(&mut rng)];
            if t >= t0 {
                post_drift.push(e);
            }
            if let Some(ev) = a.adapt(&e, &mut out) {
                first_event.get_or_insert(ev);
            }
        }
        let ev = first_event.expect("drift adjusted");
        assert!(ev.detected_at > t0 as u64);
        assert_eq!(ev.applied_at, ev.detected_at + 160);
        // Oracle: mean of the injected residuals in the retrain window.
        let lo = (ev.detected_at - 240) as usize - t0;
        for j in 0..2 {
            let window_mean: f64 = post_drift[lo..lo + 400].iter().map(|e| e[j]).sum::<f64>() / 400.0;
            assert!((ev.adjustment_after[j] - window_mean).abs() < 1e-9);
            assert!((ev.adjustment_after[j] + 7.0).abs() < 0.2);
            assert!((a.adjustment()[j] + 7.0).abs() < 0.2);
        }
    }

    #[test]
    fn fault_ramp_does_not_move_adjustment() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let noise: Vec<[f64; 2]> = (0..20_000)
            .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
            .collect();
        let (u, len) = (15_000usize, 120usize);
        let params = CusumAdaptorParams::with_threshold(12.0);
        let run = |with_ramp: bool| {
            let mut a = CusumAdaptor::new(2, params.clone()).unwrap();
            let mut out = [0.0; 2];
            noise
                .iter()
                .enumerate()
                .map(|(t, e)| {
                    let mut e = *e;
                    if with_ramp && (u..u + len).contains(&t) {
                        e[0] += 0.62 * (t - u) as f64;
                    }
                    a.adapt(&e, &mut out);
                    a.adjustment().to_vec()
                })
                .collect::<Vec<_>>()
        };
        let (plain, ramp) = (run(false), run(true));
        for t in u..u + len + 240 {
            assert_eq!(plain[t], ramp[t], "t = {t}");
        }
    }

    #[test]
    fn detections_respect_dormancy_and_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let params = small_params(4.0);
        let mut a = CusumAdaptor::new(1, params.clone()).unwrap();
        let mut out = [0.0];
        let mut changes = Vec::new();
        let mut prev = 0.0;
        for t in 1..=20_000u64 {
            let level = ((t / 700) % 3) as f64 * 2.0 - 2.0;
            a.adapt(&[level + normal.sample(&mut rng)], &mut out);
            if a.adjustment()[0] != prev {
                changes.push(t);
                prev = a.adjustment()[0];
            }
        }
        let d = a.detections();
        assert!(d.len() > 5);
        for w in d.windows(2) {
            assert!(w[1] - w[0] > params.n_retrain as u64);
        }
        let schedule: Vec<u64> = d
            .iter()
            .map(|&t| t + (params.n_retrain - params.lag) as u64)
            .filter(|&t| t <= 20_000)
            .collect();
        assert!(changes.iter().all(|c| schedule.contains(c)), "{changes:?} vs {schedule:?}");
    }

    #[test]
    fn missing_component_passes_through() {
        let mut a = CusumAdaptor::new(2, small_params(1e9)).unwrap();
        let mut out = [0.0; 2];
        a.adapt(&[f64::NAN, 1.0], &mut out);
        assert!(out[0].is_nan());
        assert_eq!(out[1], 1.0);
        assert_eq!(a.nonfinite(), 1);
    }

    #[test]
    fn ewma_zero_residuals_stay_zero() {
        let mut a = EwmaAdaptor::new(3, EwmaAdaptorParams::default()).unwrap();
        let mut out = [1.0; 3];
        for _ in 0..2000 {
            a.adapt(&[0.0; 3], &mut out);
            assert_eq!(out, [0.0; 3]);
            assert_eq!(a.adjustment(), &[0.0; 3]);
        }
    }

    #[test]
    fn ewma_without_lag_converges_to_constant() {
        let params = EwmaAdaptorParams { half_life: 480.0, lag: 0 };
        let mut a = EwmaAdaptor::new(1, params).unwrap();
        let mut out = [0.0];
        for _ in 0..20_000 {
            a.adapt(&[-7.0], &mut out);
        }
        assert!((a.adjustment()[0] + 7.0).abs() < 1e-9);
        assert!(out[0].abs() < 1e-9);
    }

    #[test]
    fn ewma_reaches_half_after_half_life() {
        let params = EwmaAdaptorParams { half_life: 480.0, lag: 0 };
        let mut a = EwmaAdaptor::new(1, params).unwrap();
        let mut out = [0.0];
        for _ in 0..480 {
            a.adapt(&[3.0], &mut out);
        }
        assert!((a.adjustment()[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ewma_adjustment_lags_input() {
        let params = EwmaAdaptorParams { half_life: 10.0, lag: 5 };
        let mut a = EwmaAdaptor::new(1, params).unwrap();
        let mut out = [0.0];
        for t in 0..5 {
            a.adapt(&[100.0 + t as f64], &mut out);
            assert_eq!(a.adjustment()[0], 0.0);
        }
        a.adapt(&[0.0], &mut out);
        // Incorporates the residual from 5 steps earlier.
        let w = 1.0 - history_weight(10.0);
        assert!((a.adjustment()[0] - w * 100.0).abs() < 1e-12);
    }

    #[test]
    fn no_adapt_is_identity() {
        let mut a = NoAdapt::new(4);
        let e = [1.0, 2.0, 3.0, -0.0];
        let mut out = [9.0; 4];
        a.adapt(&e, &mut out);
        for (x, y) in out.iter().zip(&e) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        a.adapt(&[0.0; 4], &mut out);
        assert_eq!(out, [0.0; 4]);
        assert_eq!(a.adjustment(), &[0.0; 4]);
    }

    proptest! {
        #[test]
        fn incremental_sums_match_brute_force(
            values in prop::collection::vec(-50.0f64..50.0, 1..600),
            lookbacks in prop::collection::btree_set(1usize..80, 1..5),
        ) {
            let lookbacks: Vec<usize> = lookbacks.into_iter().collect();
            let mut s = WindowedSums::new(1, &lookbacks).unwrap();
            let mut history = Vec::new();
            for v in values {
                s.push(&[v]);
                history.push(vec![v]);
                for (k, &n) in s.lookbacks().iter().enumerate() {
                    prop_assert!((s.sum(k, 0) - brute_window_sum(&history, n, 0)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn ewma_adjustment_uses_only_lagged_residuals(
            prefix in prop::collection::vec(-20.0f64..20.0, 30..80),
            tail_a in prop::collection::vec(-20.0f64..20.0, 7),
            tail_b in prop::collection::vec(-20.0f64..20.0, 7),
        ) {
            let params = EwmaAdaptorParams { half_life: 5.0, lag: 7 };
            let run = |tail: &[f64]| {
                let mut a = EwmaAdaptor::new(1, params.clone()).unwrap();
                let mut out = [0.0];
                for &e in prefix.iter().chain(tail) {
                    a.adapt(&[e], &mut out);
                }
                a.adjustment()[0]
            };
            prop_assert_eq!(run(&tail_a), run(&tail_b));
        }
    }
}
