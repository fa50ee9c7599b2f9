//! Overheating detection for motor stator windings from temperature
//! residuals, with concept-drift adaptation.
//!
//! A linear baseline predicts each winding temperature from the operating
//! point. Residuals pass through a drift adaptor, which keeps an additive
//! per-sensor adjustment, and then through per-sensor adaptive CUSUMs whose
//! maximum raises alarms.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod data;
pub mod drift;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod features;
pub mod pipeline;
pub mod predictor;
pub mod simulate;
pub mod tuning;

pub use anomaly::{AnomalyDetector, AnomalyParams, AnomalyStep};
pub use data::{split_dataset, DatasetSplit, MotorSeries, OperatingPoint, SensorFrame};
pub use drift::{
    AdaptDrift, AdaptorConfig, CusumAdaptor, CusumAdaptorParams, DriftEvent, EwmaAdaptor,
    EwmaAdaptorParams, NoAdapt,
};
pub use error::{Error, Result};
pub use evaluate::{compute_metrics, match_alarms, MatchedOutcomes, MetricsReport};
pub use experiment::{ExperimentConfig, ExperimentOutput, Method};
pub use features::{FeatureVector, FrameFeatures};
pub use pipeline::{run_monitor, AlarmEvent, Monitor, MonitorConfig, MonitorOutput};
pub use predictor::{LinearBaseline, PredictionSource, Predictor};
pub use simulate::{DriftMode, DriftSpec, FaultModel, FaultWindow, SynthConfig};
pub use tuning::{tune_pooled, tune_threshold, TuningResult};
