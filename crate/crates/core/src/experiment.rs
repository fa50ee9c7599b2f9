//! End-to-end experiment: per-motor training, pooled threshold tuning, fault
//! injection under each drift scenario and the evaluation grid.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::{anomaly_scores, AnomalyParams};
use crate::data::{
    attach_drift_annotations, parse_drift_annotations, parse_fleet_csv, split_dataset, DatasetSplit,
    MotorSeries,
};
use crate::drift::{drift_scores, AdaptorConfig, CusumAdaptorParams, EwmaAdaptorParams};
use crate::error::{Error, Result};
use crate::evaluate::{
    compute_metrics, match_alarms, write_curve_csv, write_detections_csv, write_report_csv, CurveRow,
    Detection, MatchedOutcomes, ReportRow, SweepPoint,
};
use crate::features::{build_frame_features, FrameFeatures, DEFAULT_FEATURE_HALF_LIFE};
use crate::pipeline::{adapt_residuals, detect_anomalies, residual_matrix, threshold_alarm_rows};
use crate::predictor::{fit_on_range, LinearBaseline, PredictionSource};
use crate::simulate::{
    apply_drift_scenario, generate_synthetic_fleet, parse_drift_spec_csv, save_fault_csv, DriftMode,
    DriftSpec, FaultModel, FaultWindow, SynthConfig, MIN_FAULT_GAP,
};
use crate::tuning::{tune_pooled, TuningReport, TuningResult, DEFAULT_REMOVAL_QUANTILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cusum,
    Ewma,
    #[serde(rename = "none")]
    NoAdapt,
    Threshold,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cusum, Method::Ewma, Method::NoAdapt, Method::Threshold];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cusum => "cusum",
            Method::Ewma => "ewma",
            Method::NoAdapt => "none",
            Method::Threshold => "threshold",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cusum" => Ok(Method::Cusum),
            "ewma" => Ok(Method::Ewma),
            "none" => Ok(Method::NoAdapt),
            "threshold" => Ok(Method::Threshold),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Parses `all` or a comma-separated list.
pub fn parse_selection<T: std::str::FromStr<Err = Error> + Ord + Copy>(
    text: &str,
    all: &[T],
) -> Result<Vec<T>> {
    if text.trim() == "all" {
        return Ok(all.to_vec());
    }
    let mut picked: Vec<T> = text.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
    picked.sort();
    picked.dedup();
    Ok(all.iter().copied().filter(|t| picked.contains(t)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Dataset {
    Synthetic(SynthConfig),
    Files {
        fleet: PathBuf,
        /// CSV `motor_id,drift_timestamp`.
        #[serde(default)]
        drifts: Option<PathBuf>,
        /// CSV with known per-sensor drift sizes; estimated when absent.
        #[serde(default)]
        drift_specs: Option<PathBuf>,
    },
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset::Synthetic(SynthConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub enabled: bool,
    /// Anomaly thresholds; empty means a log grid around the tuned value.
    pub gammas: Vec<f64>,
    pub grid_points: usize,
    pub temperatures: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            gammas: Vec::new(),
            grid_points: 16,
            temperatures: (125..=145).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    pub scenario: String,
    pub method: String,
    /// Total injected faults, spread evenly over the motors.
    pub n_faults: usize,
    pub q_val_anomaly: usize,
    pub q_val_drift: usize,
    pub removal_quantile: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub fault: FaultModel,
    pub min_fault_gap: usize,
    pub min_change: f64,
    pub restart_delay: usize,
    /// Fixed thresholds; tuned on validation data when absent.
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub cusum: CusumAdaptorParams,
    pub ewma: EwmaAdaptorParams,
    pub temperature_limit: f64,
    pub feature_half_life: f64,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let anomaly = AnomalyParams::default();
        Self {
            dataset: Dataset::default(),
            scenario: "all".into(),
            method: "all".into(),
            n_faults: 36,
            q_val_anomaly: 5,
            q_val_drift: 200,
            removal_quantile: DEFAULT_REMOVAL_QUANTILE,
            seed: 1,
            out: None,
            fault: FaultModel::default(),
            min_fault_gap: MIN_FAULT_GAP,
            min_change: anomaly.min_change,
            restart_delay: anomaly.restart_delay,
            gamma: None,
            lambda: None,
            cusum: CusumAdaptorParams::default(),
            ewma: EwmaAdaptorParams::default(),
            temperature_limit: 130.0,
            feature_half_life: DEFAULT_FEATURE_HALF_LIFE,
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the path of an offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("invalid config at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_json(&text)
    }

    pub fn scenarios(&self) -> Result<Vec<DriftMode>> {
        parse_selection(&self.scenario, &DriftMode::ALL)
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        parse_selection(&self.method, &Method::ALL)
    }

    pub fn anomaly_params(&self, threshold: f64) -> AnomalyParams {
        AnomalyParams {
            min_change: self.min_change,
            threshold,
            restart_delay: self.restart_delay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenarios()?;
        self.methods()?;
        self.anomaly_params(f64::INFINITY).validate()?;
        self.cusum.validate()?;
        if let Dataset::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        if self.q_val_anomaly == 0 || self.q_val_drift == 0 {
            return Err(Error::Config("q_val must be at least 1".into()));
        }
        if !(self.fault.slope > 0.0) {
            return Err(Error::Config("fault slope must be positive".into()));
        }
        Ok(())
    }

    /// Drift adaptor of `method`; `None` for the temperature threshold.
    pub fn adaptor(&self, method: Method, lambda: f64) -> Option<AdaptorConfig> {
        match method {
            Method::Cusum => Some(AdaptorConfig::Cusum(CusumAdaptorParams {
                threshold: lambda,
                ..self.cusum.clone()
            })),
            Method::Ewma => Some(AdaptorConfig::Ewma(self.ewma.clone())),
            Method::NoAdapt => Some(AdaptorConfig::None),
            Method::Threshold => None,
        }
    }
}

/// Loads the fleet and its drift specifications.
pub fn load_dataset(dataset: &Dataset) -> Result<(Vec<MotorSeries>, Vec<DriftSpec>)> {
    match dataset {
        Dataset::Synthetic(cfg) => {
            let fleet = generate_synthetic_fleet(cfg)?;
            Ok((fleet.series, fleet.drift_specs))
        }
        Dataset::Files {
            fleet,
            drifts,
            drift_specs,
        } => {
            if !fleet.exists() {
                return Err(Error::MissingArtifact(fleet.clone()));
            }
            let mut series = parse_fleet_csv(fleet)?;
            if let Some(path) = drifts {
                if !path.exists() {
                    return Err(Error::MissingArtifact(path.clone()));
                }
                attach_drift_annotations(&mut series, &parse_drift_annotations(path)?)?;
            }
            let specs = match drift_specs {
                Some(path) if !path.exists() => return Err(Error::MissingArtifact(path.clone())),
                Some(path) => parse_drift_spec_csv(path)?,
                None => series
                    .iter()
                    .filter_map(|s| s.drift_times().first().map(|&t| (s, t)))
                    .map(|(s, t)| DriftSpec::estimated(s, t, DriftMode::Negative))
                    .collect::<Result<_>>()?,
            };
            Ok((series, specs))
        }
    }
}

/// A motor with its split, features and fitted model.
#[derive(Debug, Clone)]
pub struct PreparedMotor {
    pub series: MotorSeries,
    pub split: DatasetSplit,
    pub frames: Vec<FrameFeatures>,
    pub model: LinearBaseline,
    pub drift: Option<DriftSpec>,
}

impl PreparedMotor {
    pub fn source(&self) -> PredictionSource {
        PredictionSource::model(self.model.clone())
    }

    /// Raw residuals of `range`, row-major.
    pub fn residuals(&self, range: Range<usize>) -> Result<Vec<f64>> {
        Ok(residual_matrix(&self.series, &self.frames, range, &self.source())?.0)
    }
}

pub fn prepare_motors(
    fleet: Vec<MotorSeries>,
    specs: &[DriftSpec],
    feature_half_life: f64,
) -> Result<Vec<PreparedMotor>> {
    fleet
        .into_par_iter()
        .map(|series| {
            let split = split_dataset(&series)?;
            let frames = build_frame_features(&series, feature_half_life)?;
            let model = fit_on_range(&series, &frames, split.train.clone())?;
            let drift = specs.iter().find(|s| s.motor_id == series.motor_id()).cloned();
            Ok(PreparedMotor {
                series,
                split,
                frames,
                model,
                drift,
            })
        })
        .collect()
}

/// Validation score sequences used for tuning, one per motor.
#[derive(Debug, Clone, Default)]
pub struct ValidationScores {
    pub anomaly: Vec<Vec<f64>>,
    pub drift: Vec<Vec<f64>>,
}

pub fn validation_scores(
    motors: &[PreparedMotor],
    min_change: f64,
    lookbacks: &[usize],
) -> Result<ValidationScores> {
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = motors
        .par_iter()
        .map(|m| {
            let p = m.series.sensors();
            let e = m.residuals(m.split.validation.clone())?;
            let g = anomaly_scores(p, min_change, e.chunks_exact(p))?;
            let c = drift_scores(p, lookbacks, e.chunks_exact(p))?;
            Ok((g, c))
        })
        .collect::<Result<_>>()?;
    let (anomaly, drift) = pairs.into_iter().unzip();
    Ok(ValidationScores { anomaly, drift })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma: f64,
    pub lambda: f64,
    pub anomaly: Option<TuningReport>,
    pub drift: Option<TuningReport>,
}

pub fn tune_anomaly(scores: &ValidationScores, q_val: usize, quantile: f64) -> Result<TuningResult> {
    tune_pooled(&scores.anomaly, q_val, quantile)
}

pub fn tune_drift(scores: &ValidationScores, q_val: usize, quantile: f64) -> Result<TuningResult> {
    tune_pooled(&scores.drift, q_val, quantile)
}

pub fn calibrate(motors: &[PreparedMotor], config: &ExperimentConfig) -> Result<Calibration> {
    let scores = validation_scores(motors, config.min_change, &config.cusum.lookbacks)?;
    let (gamma, anomaly) = match config.gamma {
        Some(g) => (g, None),
        None => {
            let r = tune_anomaly(&scores, config.q_val_anomaly, config.removal_quantile)?;
            if !(r.threshold > 0.0) {
                return Err(Error::Tuning(format!(
                    "validation anomaly scores have fewer than {} positive peaks",
                    config.q_val_anomaly
                )));
            }
            (r.threshold, Some(TuningReport::new("anomaly", &r)))
        }
    };
    let needs_lambda = config.methods()?.contains(&Method::Cusum);
    let (lambda, drift) = match config.lambda {
        Some(l) => (l, None),
        None if !needs_lambda => (f64::INFINITY, None),
        None => {
            let r = tune_drift(&scores, config.q_val_drift, config.removal_quantile)?;
            (r.threshold, Some(TuningReport::new("drift", &r)))
        }
    };
    info!("tuned gamma = {gamma}, lambda = {lambda}");
    Ok(Calibration {
        gamma,
        lambda,
        anomaly,
        drift,
    })
}

/// Planned fault of one motor, shared by all scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedFault {
    pub onset: usize,
    pub sensor: usize,
    pub delay: usize,
}

fn faults_per_motor(total: usize, motors: usize) -> Vec<usize> {
    (0..motors)
        .map(|m| total / motors + usize::from(m < total % motors))
        .collect()
}

const FAULT_STREAM_KEY: u64 = 0x9E37_79B9_7F4A_7C15;

/// Onsets, sensors and delays in each motor's test range.
pub fn plan_faults(motors: &[PreparedMotor], config: &ExperimentConfig) -> Result<Vec<Vec<PlannedFault>>> {
    let counts = faults_per_motor(config.n_faults, motors.len());
    let span = config.fault.max_span();
    let gap = config.min_fault_gap + span;
    motors
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (m, n))| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ FAULT_STREAM_KEY);
            rng.set_stream(i as u64 + 1);
            let test = &m.split.test;
            let end = test.end.saturating_sub(span).max(test.start);
            let onsets = sample_onsets(test.start..end, n, gap, &mut rng, m.series.motor_id())?;
            Ok(onsets
                .into_iter()
                .map(|onset| PlannedFault {
                    onset,
                    sensor: rng.random_range(0..m.series.sensors()),
                    delay: rng.random_range(0..=config.fault.max_delay),
                })
                .collect())
        })
        .collect()
}

fn sample_onsets(
    range: Range<usize>,
    n: usize,
    gap: usize,
    rng: &mut ChaCha8Rng,
    motor_id: &str,
) -> Result<Vec<usize>> {
    crate::simulate::sample_fault_times(range, n, gap, rng)
        .map_err(|e| Error::Sampling(format!("motor {motor_id}: {e}")))
}

/// Series of one motor under a drift scenario with the planned faults
/// injected.
pub fn scenario_series(
    motor: &PreparedMotor,
    mode: DriftMode,
    plan: &[PlannedFault],
    fault: &FaultModel,
) -> Result<(MotorSeries, Vec<FaultWindow>)> {
    let mut series = motor.series.clone();
    if let Some(spec) = &motor.drift {
        apply_drift_scenario(&mut series, &spec.with_mode(mode))?;
    }
    let mut windows = Vec::with_capacity(plan.len());
    for f in plan {
        match fault.inject(&mut series, f.onset, f.sensor, f.delay) {
            Ok(w) => windows.push(w),
            Err(Error::FaultRejected(msg)) => warn!("motor {}: fault skipped: {msg}", motor.series.motor_id()),
            Err(e) => return Err(e),
        }
    }
    Ok((series, windows))
}

#[derive(Debug, Clone, Default)]
struct CellResult {
    outcomes: MatchedOutcomes,
    sweep: Vec<MatchedOutcomes>,
}

fn alarm_times(series: &MotorSeries, start: usize, rows: &[(usize, f64, Option<usize>)]) -> Vec<i64> {
    rows.iter().map(|r| series.timestamp(start + r.0)).collect()
}

struct MotorRun<'a> {
    config: &'a ExperimentConfig,
    calibration: &'a Calibration,
    methods: &'a [Method],
    gammas: &'a [f64],
    temperatures: &'a [f64],
}

impl MotorRun<'_> {
    fn run(
        &self,
        motor: &PreparedMotor,
        mode: DriftMode,
        plan: &[PlannedFault],
    ) -> Result<(Vec<FaultWindow>, BTreeMap<Method, CellResult>)> {
        let (series, windows) = scenario_series(motor, mode, plan, &self.config.fault)?;
        let id = series.motor_id().to_string();
        let test = motor.split.test.clone();
        let p = series.sensors();
        let mut cells = BTreeMap::new();
        let needs_residuals = self.methods.iter().any(|m| *m != Method::Threshold);
        let residuals = if needs_residuals {
            residual_matrix(&series, &motor.frames, test.clone(), &motor.source())?.0
        } else {
            Vec::new()
        };
        for &method in self.methods {
            let evaluate = |rows: &[(usize, f64, Option<usize>)]| {
                match_alarms(&id, &alarm_times(&series, test.start, rows), &windows)
            };
            let cell = match self.config.adaptor(method, self.calibration.lambda) {
                Some(adaptor) => {
                    let (adapted, _) = adapt_residuals(&residuals, p, &adaptor)?;
                    let params = self.config.anomaly_params(self.calibration.gamma);
                    let outcomes = evaluate(&detect_anomalies(&adapted, p, &params)?)?;
                    let sweep = self
                        .gammas
                        .iter()
                        .map(|&g| evaluate(&detect_anomalies(&adapted, p, &self.config.anomaly_params(g))?))
                        .collect::<Result<_>>()?;
                    CellResult { outcomes, sweep }
                }
                None => {
                    let delay = self.config.restart_delay;
                    let rows = threshold_alarm_rows(&series, test.clone(), self.config.temperature_limit, delay);
                    let outcomes = evaluate(&rows)?;
                    let sweep = self
                        .temperatures
                        .iter()
                        .map(|&t| evaluate(&threshold_alarm_rows(&series, test.clone(), t, delay)))
                        .collect::<Result<_>>()?;
                    CellResult { outcomes, sweep }
                }
            };
            cells.insert(method, cell);
        }
        Ok((windows, cells))
    }
}

/// Default anomaly sweep grid: log-spaced from a tenth to ten times `gamma`.
pub fn gamma_grid(gamma: f64, points: usize) -> Vec<f64> {
    if points < 2 || !(gamma > 0.0) || !gamma.is_finite() {
        return vec![gamma];
    }
    let lo = (gamma / 10.0).ln();
    let hi = (gamma * 10.0).ln();
    (0..points)
        .map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub calibration: Option<Calibration>,
    pub rows: Vec<ReportRow>,
    pub curves: Vec<CurveRow>,
    pub detections: Vec<(String, String, Detection)>,
    pub faults: BTreeMap<String, Vec<FaultWindow>>,
    /// Per-cell outcomes before aggregation into metrics.
    pub outcomes: BTreeMap<(String, String), MatchedOutcomes>,
}

impl ExperimentOutput {
    pub fn row(&self, scenario: DriftMode, method: Method) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario.name() && r.method == method.name())
    }
}

/// Runs the grid on already prepared motors.
pub fn run_grid(
    motors: &[PreparedMotor],
    calibration: &Calibration,
    config: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    let scenarios = config.scenarios()?;
    let methods = config.methods()?;
    let plans = plan_faults(motors, config)?;
    let gammas = if !config.sweep.enabled {
        Vec::new()
    } else if config.sweep.gammas.is_empty() {
        gamma_grid(calibration.gamma, config.sweep.grid_points)
    } else {
        config.sweep.gammas.clone()
    };
    let temperatures = if config.sweep.enabled { config.sweep.temperatures.clone() } else { Vec::new() };
    for list in [&gammas, &temperatures] {
        if list.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Config("sweep thresholds must be sorted ascending".into()));
        }
    }
    let runner = MotorRun {
        config,
        calibration,
        methods: &methods,
        gammas: &gammas,
        temperatures: &temperatures,
    };
    let tasks: Vec<(DriftMode, usize)> = scenarios
        .iter()
        .flat_map(|&s| (0..motors.len()).map(move |m| (s, m)))
        .collect();
    let results: Vec<_> = tasks
        .par_iter()
        .map(|&(s, m)| runner.run(&motors[m], s, &plans[m]))
        .collect::<Result<_>>()?;

    let mut out = ExperimentOutput {
        calibration: Some(calibration.clone()),
        ..Default::default()
    };
    let mut merged: BTreeMap<(DriftMode, Method), CellResult> = BTreeMap::new();
    for (&(scenario, _), (windows, cells)) in tasks.iter().zip(results) {
        out.faults.entry(scenario.name().to_string()).or_default().extend(windows);
        for (method, cell) in cells {
            let slot = merged.entry((scenario, method)).or_insert_with(|| CellResult {
                outcomes: MatchedOutcomes::default(),
                sweep: vec![MatchedOutcomes::default(); cell.sweep.len()],
            });
            slot.outcomes.merge(cell.outcomes);
            for (acc, o) in slot.sweep.iter_mut().zip(cell.sweep) {
                acc.merge(o);
            }
        }
    }
    for &scenario in &scenarios {
        for &method in &methods {
            let Some(cell) = merged.remove(&(scenario, method)) else { continue };
            let (sname, mname) = (scenario.name().to_string(), method.name().to_string());
            out.rows.push(ReportRow {
                scenario: sname.clone(),
                method: mname.clone(),
                metrics: compute_metrics(&cell.outcomes),
            });
            let grid = if method == Method::Threshold { &temperatures } else { &gammas };
            for (&threshold, o) in grid.iter().zip(&cell.sweep) {
                out.curves.push(CurveRow {
                    scenario: sname.clone(),
                    method: mname.clone(),
                    point: SweepPoint {
                        threshold,
                        metrics: compute_metrics(o),
                    },
                });
            }
            out.detections.extend(
                cell.outcomes
                    .detections
                    .iter()
                    .map(|d| (sname.clone(), mname.clone(), d.clone())),
            );
            out.outcomes.insert((sname, mname), cell.outcomes);
        }
    }
    Ok(out)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let (fleet, specs) = load_dataset(&config.dataset)?;
    info!("loaded {} motors", fleet.len());
    let motors = prepare_motors(fleet, &specs, config.feature_half_life)?;
    let calibration = calibrate(&motors, config)?;
    run_grid(&motors, &calibration, config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes the report, curves, detection times, faults and calibration into
/// `dir`; returns the written paths.
pub fn write_experiment_outputs(dir: &Path, output: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join("report.csv");
    write_report_csv(create(&path)?, &output.rows)?;
    written.push(path);
    let path = dir.join("curves.csv");
    write_curve_csv(create(&path)?, &output.curves)?;
    written.push(path);
    let path = dir.join("detections.csv");
    write_detections_csv(create(&path)?, &output.detections)?;
    written.push(path);
    for (scenario, faults) in &output.faults {
        let path = dir.join(format!("faults_{scenario}.csv"));
        save_fault_csv(&path, faults)?;
        written.push(path);
    }
    if let Some(c) = &output.calibration {
        let path = dir.join("calibration.json");
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, c)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
