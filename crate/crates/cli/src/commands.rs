use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thermwatch::data::{
    parse_fleet_csv, save_drift_annotations, save_fleet_csv, split_dataset, DriftAnnotation,
};
use thermwatch::evaluate::{write_report_csv, ReportRow};
use thermwatch::experiment::{
    load_dataset, plan_faults, prepare_motors, run_experiment, scenario_series, tune_anomaly,
    tune_drift, validation_scores, write_experiment_outputs, Dataset, PreparedMotor,
};
use thermwatch::features::build_frame_features;
use thermwatch::pipeline::{
    run_monitor_with_features, run_threshold_monitor, save_alarms_csv, save_drift_events_csv,
    write_trace_csv,
};
use thermwatch::simulate::{generate_synthetic_fleet, parse_fault_csv, save_drift_spec_csv, save_fault_csv};
use thermwatch::tuning::TuningReport;
use thermwatch::{
    compute_metrics, match_alarms, Error, ExperimentConfig, LinearBaseline, MatchedOutcomes, Method,
    MonitorConfig, MonitorOutput, Result,
};

use crate::manifest;
use crate::Overrides;

const FLEET: &str = "fleet.csv";
const DRIFTS: &str = "drifts.csv";
const DRIFT_SPECS: &str = "drift_specs.csv";
const MODELS: &str = "models.json";
const DEFAULT_OUT: &str = "thermwatch-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Detector {
    Anomaly,
    Drift,
}

impl Detector {
    fn name(self) -> &'static str {
        match self {
            Detector::Anomaly => "anomaly",
            Detector::Drift => "drift",
        }
    }

    fn artifact(self) -> String {
        format!("tuning_{}.json", self.name())
    }
}

struct Context {
    config: ExperimentConfig,
    out: PathBuf,
    trace: bool,
    written: Vec<PathBuf>,
}

impl Context {
    fn new(overrides: &Overrides, qval_target: Detector) -> Result<Self> {
        let mut config = match &overrides.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
            if let Dataset::Synthetic(s) = &mut config.dataset {
                s.seed = seed;
            }
        }
        if let Some(out) = &overrides.out {
            config.out = Some(out.clone());
        }
        if let Some(s) = &overrides.scenario {
            config.scenario = s.clone();
        }
        if let Some(m) = &overrides.method {
            config.method = m.clone();
        }
        if let Some(q) = overrides.qval {
            match qval_target {
                Detector::Anomaly => config.q_val_anomaly = q,
                Detector::Drift => config.q_val_drift = q,
            }
        }
        config.validate()?;
        let out = config.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Self {
            config,
            out,
            trace: overrides.trace,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn record(&mut self, path: PathBuf) {
        info!("wrote {}", path.display());
        self.written.push(path);
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record(path);
        Ok(())
    }

    fn finish(self, command: &str) -> Result<()> {
        let path = manifest::write(&self.out, command, &self.config, &self.written)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    /// Input data of the downstream commands: the files written by `synth`
    /// for a synthetic config, the configured files otherwise.
    fn input_dataset(&self) -> Dataset {
        match &self.config.dataset {
            Dataset::Synthetic(_) => Dataset::Files {
                fleet: self.path(FLEET),
                drifts: Some(self.path(DRIFTS)),
                drift_specs: Some(self.path(DRIFT_SPECS)),
            },
            files => files.clone(),
        }
    }

    /// Motors of the input dataset paired with the models from `train`.
    fn trained_motors(&self) -> Result<Vec<PreparedMotor>> {
        let models: BTreeMap<String, LinearBaseline> = read_json(&self.path(MODELS))?;
        let (fleet, specs) = load_dataset(&self.input_dataset())?;
        fleet
            .into_iter()
            .map(|series| {
                let id = series.motor_id().to_string();
                let model = models.get(&id).cloned().ok_or_else(|| {
                    Error::Config(format!("{MODELS} has no model for motor {id}; rerun `thermwatch train`"))
                })?;
                Ok(PreparedMotor {
                    split: split_dataset(&series)?,
                    frames: build_frame_features(&series, self.config.feature_half_life)?,
                    drift: specs.iter().find(|s| s.motor_id == id).cloned(),
                    model,
                    series,
                })
            })
            .collect()
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

/// Next step for a missing artifact.
pub fn hint(error: &Error) -> Option<String> {
    let Error::MissingArtifact(path) = error else { return None };
    let name = path.file_name()?.to_string_lossy();
    let out = path.parent().map(|p| p.display().to_string()).unwrap_or_default();
    let (step, alternative) = match name.as_ref() {
        FLEET | DRIFTS | DRIFT_SPECS => ("synth", None),
        MODELS => ("train", None),
        "tuning_anomaly.json" => ("tune --detector anomaly", Some("gamma")),
        "tuning_drift.json" => ("tune --detector drift", Some("lambda")),
        n if n.starts_with("fleet_") || n.starts_with("faults_") => ("inject", None),
        _ => return Some(format!("check that {} exists", path.display())),
    };
    let mut text = format!("run `thermwatch {step} --out {out}` first");
    if let Some(key) = alternative {
        text.push_str(&format!(", or set `{key}` in the config"));
    }
    Some(text)
}

pub fn synth(overrides: &Overrides) -> Result<()> {
    let mut ctx = Context::new(overrides, Detector::Anomaly)?;
    let Dataset::Synthetic(synth) = &ctx.config.dataset else {
        return Err(Error::Config("`synth` needs a synthetic dataset in the config".into()));
    };
    let fleet = generate_synthetic_fleet(synth)?;
    let annotations: Vec<DriftAnnotation> = fleet
        .series
        .iter()
        .flat_map(|s| {
            s.drift_times().iter().map(|&t| DriftAnnotation {
                motor_id: s.motor_id().to_string(),
                drift_timestamp: t,
            })
        })
        .collect();
    let path = ctx.path(FLEET);
    save_fleet_csv(&path, &fleet.series)?;
    ctx.record(path);
    let path = ctx.path(DRIFTS);
    save_drift_annotations(&path, &annotations)?;
    ctx.record(path);
    let path = ctx.path(DRIFT_SPECS);
    save_drift_spec_csv(&path, &fleet.drift_specs)?;
    ctx.record(path);
    ctx.finish("synth")
}

pub fn train(overrides: &Overrides) -> Result<()> {
    let mut ctx = Context::new(overrides, Detector::Anomaly)?;
    let (fleet, specs) = load_dataset(&ctx.input_dataset())?;
    let motors = prepare_motors(fleet, &specs, ctx.config.feature_half_life)?;
    let models: BTreeMap<&str, &LinearBaseline> =
        motors.iter().map(|m| (m.series.motor_id(), &m.model)).collect();
    ctx.write_json(MODELS, &models)?;
    ctx.finish("train")
}

pub fn tune(overrides: &Overrides, detector: Detector) -> Result<()> {
    let mut ctx = Context::new(overrides, detector)?;
    let motors = ctx.trained_motors()?;
    let cfg = &ctx.config;
    let scores = validation_scores(&motors, cfg.min_change, &cfg.cusum.lookbacks)?;
    let (result, q_val) = match detector {
        Detector::Anomaly => (tune_anomaly(&scores, cfg.q_val_anomaly, cfg.removal_quantile)?, cfg.q_val_anomaly),
        Detector::Drift => (tune_drift(&scores, cfg.q_val_drift, cfg.removal_quantile)?, cfg.q_val_drift),
    };
    if !(result.threshold > 0.0) {
        return Err(Error::Tuning(format!(
            "validation {} scores have fewer than {q_val} positive peaks",
            detector.name()
        )));
    }
    info!("tuned {} threshold = {}", detector.name(), result.threshold);
    ctx.write_json(&detector.artifact(), &TuningReport::new(detector.name(), &result))?;
    ctx.finish(&format!("tune-{}", detector.name()))
}

pub fn inject(overrides: &Overrides) -> Result<()> {
    let mut ctx = Context::new(overrides, Detector::Anomaly)?;
    let motors = ctx.trained_motors()?;
    let plans = plan_faults(&motors, &ctx.config)?;
    for mode in ctx.config.scenarios()? {
        let mut fleet = Vec::with_capacity(motors.len());
        let mut faults = Vec::new();
        for (motor, plan) in motors.iter().zip(&plans) {
            let (series, windows) = scenario_series(motor, mode, plan, &ctx.config.fault)?;
            fleet.push(series);
            faults.extend(windows);
        }
        info!("scenario {}: {} faults", mode.name(), faults.len());
        let path = ctx.path(&format!("fleet_{}.csv", mode.name()));
        save_fleet_csv(&path, &fleet)?;
        ctx.record(path);
        let path = ctx.path(&format!("faults_{}.csv", mode.name()));
        save_fault_csv(&path, &faults)?;
        ctx.record(path);
    }
    ctx.finish("inject")
}

fn tuned_threshold(ctx: &Context, fixed: Option<f64>, detector: Detector) -> Result<f64> {
    match fixed {
        Some(v) => Ok(v),
        None => Ok(read_json::<TuningReport>(&ctx.path(&detector.artifact()))?.threshold),
    }
}

pub fn run(overrides: &Overrides) -> Result<()> {
    let mut ctx = Context::new(overrides, Detector::Anomaly)?;
    let methods = ctx.config.methods()?;
    let motors = ctx.trained_motors()?;
    let needs_gamma = methods.iter().any(|&m| m != Method::Threshold);
    let gamma = if needs_gamma {
        tuned_threshold(&ctx, ctx.config.gamma, Detector::Anomaly)?
    } else {
        f64::INFINITY
    };
    let lambda = if methods.contains(&Method::Cusum) {
        tuned_threshold(&ctx, ctx.config.lambda, Detector::Drift)?
    } else {
        f64::INFINITY
    };
    let by_id: BTreeMap<&str, &PreparedMotor> = motors.iter().map(|m| (m.series.motor_id(), m)).collect();
    let mut rows = Vec::new();
    for mode in ctx.config.scenarios()? {
        let scenario = mode.name();
        let fleet = parse_fleet_csv(require(ctx.path(&format!("fleet_{scenario}.csv")))?)?;
        let faults = parse_fault_csv(require(ctx.path(&format!("faults_{scenario}.csv")))?)?;
        for &method in &methods {
            let mut outputs = Vec::with_capacity(fleet.len());
            let mut outcomes = MatchedOutcomes::default();
            for series in &fleet {
                let motor = by_id.get(series.motor_id()).ok_or_else(|| {
                    Error::Config(format!("motor {} of fleet_{scenario}.csv was not trained", series.motor_id()))
                })?;
                let test = motor.split.test.clone();
                let output = match ctx.config.adaptor(method, lambda) {
                    Some(adaptor) => {
                        let monitor = MonitorConfig {
                            adaptor,
                            anomaly: ctx.config.anomaly_params(gamma),
                            feature_half_life: ctx.config.feature_half_life,
                            trace: ctx.trace,
                        };
                        run_monitor_with_features(series, &motor.frames, test, &motor.source(), &monitor)?
                    }
                    None => run_threshold_monitor(
                        series,
                        test,
                        ctx.config.temperature_limit,
                        ctx.config.restart_delay,
                    )?,
                };
                let windows: Vec<_> = faults.iter().filter(|f| f.motor_id == output.motor_id).cloned().collect();
                let times: Vec<i64> = output.alarms.iter().map(|a| a.time).collect();
                outcomes.merge(match_alarms(&output.motor_id, &times, &windows)?);
                outputs.push(output);
            }
            write_run_outputs(&mut ctx, scenario, method, &outputs)?;
            rows.push(ReportRow {
                scenario: scenario.to_string(),
                method: method.name().to_string(),
                metrics: compute_metrics(&outcomes),
            });
        }
    }
    let path = ctx.path("run_report.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_report_csv(BufWriter::new(file), &rows)?;
    ctx.record(path);
    ctx.finish("run")
}

fn write_run_outputs(ctx: &mut Context, scenario: &str, method: Method, outputs: &[MonitorOutput]) -> Result<()> {
    let cell = format!("{scenario}_{}", method.name());
    let path = ctx.path(&format!("alarms_{cell}.csv"));
    save_alarms_csv(&path, outputs)?;
    ctx.record(path);
    if method != Method::Threshold {
        let path = ctx.path(&format!("drift_events_{cell}.csv"));
        save_drift_events_csv(&path, outputs)?;
        ctx.record(path);
    }
    if ctx.trace && outputs.iter().any(|o| !o.trace.is_empty()) {
        let path = ctx.path(&format!("trace_{cell}.csv"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_trace_csv(BufWriter::new(file), outputs)?;
        ctx.record(path);
    }
    Ok(())
}

pub fn experiment(overrides: &Overrides) -> Result<()> {
    let mut ctx = Context::new(overrides, Detector::Anomaly)?;
    let output = run_experiment(&ctx.config)?;
    for path in write_experiment_outputs(&ctx.out, &output)? {
        ctx.record(path);
    }
    ctx.finish("experiment")
}
