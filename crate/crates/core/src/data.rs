//! Fleet data model: minute-averaged sensor frames grouped per motor, CSV
//! ingestion and the chronological train/validation/test split.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples kept ahead of the first drift in the test set: 60 days of minutes.
pub const PRE_DRIFT_TEST_SAMPLES: usize = 60 * 1440;

/// Operational inputs of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// kW
    pub power: f64,
    /// rpm
    pub speed: f64,
    /// kNm
    pub torque: f64,
    /// °C
    pub air_inlet: f64,
    /// °C
    pub water_cooling: f64,
}

/// One minute-averaged observation of a motor.
///
/// Missing winding temperatures are carried as `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub timestamp: i64,
    pub motor_id: String,
    pub y: Vec<f64>,
    pub operating: OperatingPoint,
    /// Externally computed predictions, one per sensor, when the fleet file
    /// carries `yhat` columns.
    pub yhat: Option<Vec<f64>>,
}

/// Frames of one motor stored column-wise.
///
/// Timestamps are strictly increasing; the sensor count is fixed at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MotorSeries {
    motor_id: String,
    sensors: usize,
    timestamps: Vec<i64>,
    temps: Vec<f64>,
    operating: Vec<OperatingPoint>,
    yhat: Option<Vec<f64>>,
    drift_times: Vec<i64>,
}

impl MotorSeries {
    pub fn new(motor_id: impl Into<String>, sensors: usize) -> Self {
        Self::with_capacity(motor_id, sensors, 0)
    }

    pub fn with_capacity(motor_id: impl Into<String>, sensors: usize, frames: usize) -> Self {
        Self {
            motor_id: motor_id.into(),
            sensors,
            timestamps: Vec::with_capacity(frames),
            temps: Vec::with_capacity(frames * sensors),
            operating: Vec::with_capacity(frames),
            yhat: None,
            drift_times: Vec::new(),
        }
    }

    pub fn motor_id(&self) -> &str {
        &self.motor_id
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.timestamps[index]
    }

    pub fn temps(&self, index: usize) -> &[f64] {
        &self.temps[index * self.sensors..(index + 1) * self.sensors]
    }

    pub fn temps_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.temps[index * self.sensors..(index + 1) * self.sensors]
    }

    pub fn operating(&self, index: usize) -> &OperatingPoint {
        &self.operating[index]
    }

    pub fn operating_points(&self) -> &[OperatingPoint] {
        &self.operating
    }

    pub fn predictions(&self, index: usize) -> Option<&[f64]> {
        self.yhat
            .as_ref()
            .map(|p| &p[index * self.sensors..(index + 1) * self.sensors])
    }

    pub fn has_predictions(&self) -> bool {
        self.yhat.is_some()
    }

    pub fn drift_times(&self) -> &[i64] {
        &self.drift_times
    }

    /// Appends a frame. The frame's timestamp must be later than the last one.
    pub fn push(&mut self, frame: &SensorFrame) -> Result<()> {
        self.push_parts(frame.timestamp, &frame.y, frame.operating, frame.yhat.as_deref())
    }

    pub fn push_parts(
        &mut self,
        timestamp: i64,
        y: &[f64],
        operating: OperatingPoint,
        yhat: Option<&[f64]>,
    ) -> Result<()> {
        if y.len() != self.sensors {
            return Err(Error::Series(format!(
                "motor {}: frame has {} sensors, expected {}",
                self.motor_id,
                y.len(),
                self.sensors
            )));
        }
        if let Some(&last) = self.timestamps.last() {
            if timestamp <= last {
                return Err(Error::Series(format!(
                    "motor {}: timestamp {timestamp} does not follow {last}",
                    self.motor_id
                )));
            }
        }
        let (first, width) = (self.timestamps.is_empty(), self.sensors);
        match (&mut self.yhat, yhat) {
            (Some(store), Some(p)) if p.len() == width => store.extend_from_slice(p),
            (None, Some(p)) if first && p.len() == width => {
                self.yhat = Some(p.to_vec())
            }
            (None, None) => {}
            _ => {
                return Err(Error::Series(format!(
                    "motor {}: prediction columns must be present on every frame",
                    self.motor_id
                )))
            }
        }
        self.timestamps.push(timestamp);
        self.temps.extend_from_slice(y);
        self.operating.push(operating);
        Ok(())
    }

    pub fn frame(&self, index: usize) -> SensorFrame {
        SensorFrame {
            timestamp: self.timestamps[index],
            motor_id: self.motor_id.clone(),
            y: self.temps(index).to_vec(),
            operating: self.operating[index],
            yhat: self.predictions(index).map(<[f64]>::to_vec),
        }
    }

    pub fn frames(&self) -> impl Iterator<Item = SensorFrame> + '_ {
        (0..self.len()).map(|i| self.frame(i))
    }

    /// Records known drift timestamps. Each must lie strictly inside the
    /// series' time range.
    pub fn set_drift_times(&mut self, mut times: Vec<i64>) -> Result<()> {
        times.sort_unstable();
        times.dedup();
        let (first, last) = match (self.timestamps.first(), self.timestamps.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ if times.is_empty() => return Ok(()),
            _ => {
                return Err(Error::Series(format!(
                    "motor {}: drift annotated on an empty series",
                    self.motor_id
                )))
            }
        };
        if let Some(&bad) = times.iter().find(|&&t| t <= first || t >= last) {
            return Err(Error::Series(format!(
                "motor {}: drift time {bad} outside ({first}, {last})",
                self.motor_id
            )));
        }
        self.drift_times = times;
        Ok(())
    }

    /// First index whose timestamp is at or after `timestamp`.
    pub fn index_at_or_after(&self, timestamp: i64) -> usize {
        self.timestamps.partition_point(|&t| t < timestamp)
    }

    /// Indices `i` where the spacing to frame `i - 1` is not one minute.
    pub fn gaps(&self) -> Vec<usize> {
        self.timestamps
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] - w[0] != 1)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Chronological index ranges into one motor series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

/// Splits a series into train, validation and test ranges.
///
/// With a known drift the test set starts [`PRE_DRIFT_TEST_SAMPLES`] before
/// the first drift; otherwise it is the last quarter of the samples. The
/// remaining prefix is halved into train and validation.
pub fn split_dataset(series: &MotorSeries) -> Result<DatasetSplit> {
    let n = series.len();
    let degenerate = |message: String| Error::DegenerateSplit {
        motor_id: series.motor_id().to_string(),
        message,
    };
    if n == 0 {
        return Err(degenerate("empty series".into()));
    }
    let test_start = match series.drift_times().first() {
        Some(&drift) => {
            let drift_index = series.index_at_or_after(drift);
            drift_index
                .checked_sub(PRE_DRIFT_TEST_SAMPLES)
                .ok_or_else(|| {
                    degenerate(format!(
                        "first drift at sample {drift_index} leaves no room for {PRE_DRIFT_TEST_SAMPLES} pre-drift test samples"
                    ))
                })?
        }
        None => n - n / 4,
    };
    let train_len = test_start / 2;
    if train_len == 0 {
        return Err(degenerate(format!(
            "only {test_start} samples precede the test set; train would be empty"
        )));
    }
    Ok(DatasetSplit {
        train: 0..train_len,
        validation: train_len..test_start,
        test: test_start..n,
    })
}

const OPERATING_COLUMNS: [&str; 5] = ["power", "speed", "torque", "air_inlet", "water_cooling"];

struct ColumnMap {
    timestamp: usize,
    motor_id: usize,
    temps: Vec<usize>,
    operating: [usize; 5],
    yhat: Option<Vec<usize>>,
}

impl ColumnMap {
    fn from_headers(headers: &csv::StringRecord, path: &Path) -> Result<Self> {
        let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            message,
        };
        let require = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| schema(format!("missing column `{name}`")))
        };
        let numbered = |prefix: &str| -> Vec<usize> {
            (1..)
                .map_while(|k| index.get(format!("{prefix}{k}").as_str()).copied())
                .collect()
        };
        let temps = numbered("t");
        if temps.is_empty() {
            return Err(schema("missing column `t1`".into()));
        }
        let mut operating = [0; 5];
        for (slot, name) in operating.iter_mut().zip(OPERATING_COLUMNS) {
            *slot = require(name)?;
        }
        let yhat = numbered("yhat");
        let yhat = match yhat.len() {
            0 => None,
            k if k == temps.len() => Some(yhat),
            k => {
                return Err(schema(format!(
                    "{k} prediction columns for {} temperature columns",
                    temps.len()
                )))
            }
        };
        Ok(Self {
            timestamp: require("timestamp")?,
            motor_id: require("motor_id")?,
            temps,
            operating,
            yhat,
        })
    }
}

fn parse_float(field: &str, row: usize, column: &str) -> Result<f64> {
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field.trim().parse().map_err(|_| Error::Data {
        row,
        message: format!("column `{column}`: cannot parse `{field}` as a number"),
    })
}

/// Reads a fleet CSV file into one series per motor, in order of first
/// appearance.
pub fn parse_fleet_csv(path: impl AsRef<Path>) -> Result<Vec<MotorSeries>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_fleet_csv(file, path)
}

/// Like [`parse_fleet_csv`] over any reader; `origin` names the source in
/// schema errors.
pub fn read_fleet_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<MotorSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let columns = ColumnMap::from_headers(rdr.headers()?, origin)?;
    let sensors = columns.temps.len();
    let mut fleet: Vec<MotorSeries> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut y = vec![0.0; sensors];
    let mut yhat = vec![0.0; sensors];
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let row = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let data_err = |message: String| Error::Data { row, message };
        let timestamp: i64 = field(columns.timestamp)
            .trim()
            .parse()
            .map_err(|_| data_err(format!("bad timestamp `{}`", field(columns.timestamp))))?;
        let motor_id = field(columns.motor_id);
        if motor_id.is_empty() {
            return Err(data_err("empty motor_id".into()));
        }
        for (k, (slot, &col)) in y.iter_mut().zip(&columns.temps).enumerate() {
            *slot = parse_float(field(col), row, &format!("t{}", k + 1))?;
        }
        let mut op = [0.0; 5];
        for ((slot, &col), name) in op.iter_mut().zip(&columns.operating).zip(OPERATING_COLUMNS) {
            *slot = parse_float(field(col), row, name)?;
        }
        let operating = OperatingPoint {
            power: op[0],
            speed: op[1],
            torque: op[2],
            air_inlet: op[3],
            water_cooling: op[4],
        };
        let predictions = match &columns.yhat {
            Some(cols) => {
                for (k, (slot, &col)) in yhat.iter_mut().zip(cols).enumerate() {
                    *slot = parse_float(field(col), row, &format!("yhat{}", k + 1))?;
                }
                Some(yhat.as_slice())
            }
            None => None,
        };
        let slot = *by_id.entry(motor_id.to_string()).or_insert_with(|| {
            fleet.push(MotorSeries::new(motor_id, sensors));
            fleet.len() - 1
        });
        let series = &mut fleet[slot];
        if let Some(&last) = series.timestamps.last() {
            if timestamp == last {
                return Err(data_err(format!(
                    "duplicate timestamp {timestamp} for motor {motor_id}"
                )));
            }
            if timestamp < last {
                return Err(data_err(format!(
                    "timestamp {timestamp} for motor {motor_id} precedes previous {last}"
                )));
            }
        }
        series
            .push_parts(timestamp, &y, operating, predictions)
            .map_err(|e| data_err(e.to_string()))?;
    }
    for series in &fleet {
        let gaps = series.gaps();
        if !gaps.is_empty() {
            log::warn!(
                "motor {}: {} gaps in the minute grid",
                series.motor_id(),
                gaps.len()
            );
        }
    }
    Ok(fleet)
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Writes a fleet in the CSV layout read by [`parse_fleet_csv`]. Prediction
/// columns are emitted when every series carries them.
pub fn write_fleet_csv<W: Write>(writer: W, fleet: &[MotorSeries]) -> Result<()> {
    let sensors = fleet.first().map_or(6, MotorSeries::sensors);
    let with_yhat = !fleet.is_empty() && fleet.iter().all(MotorSeries::has_predictions);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string(), "motor_id".to_string()];
    header.extend((1..=sensors).map(|k| format!("t{k}")));
    header.extend(OPERATING_COLUMNS.iter().map(|s| s.to_string()));
    if with_yhat {
        header.extend((1..=sensors).map(|k| format!("yhat{k}")));
    }
    wtr.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for series in fleet {
        if series.sensors() != sensors {
            return Err(Error::Series(format!(
                "motor {} has {} sensors; fleet files need a uniform count of {sensors}",
                series.motor_id(),
                series.sensors()
            )));
        }
        for i in 0..series.len() {
            row.clear();
            row.push(series.timestamp(i).to_string());
            row.push(series.motor_id().to_string());
            row.extend(series.temps(i).iter().map(|&v| fmt_value(v)));
            let op = series.operating(i);
            for v in [op.power, op.speed, op.torque, op.air_inlet, op.water_cooling] {
                row.push(fmt_value(v));
            }
            if with_yhat {
                row.extend(series.predictions(i).unwrap_or(&[]).iter().map(|&v| fmt_value(v)));
            }
            wtr.write_record(&row)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<fleet csv>", e))?;
    Ok(())
}

pub fn save_fleet_csv(path: impl AsRef<Path>, fleet: &[MotorSeries]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_fleet_csv(std::io::BufWriter::new(file), fleet)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftAnnotation {
    pub motor_id: String,
    pub drift_timestamp: i64,
}

pub fn parse_drift_annotations(path: impl AsRef<Path>) -> Result<Vec<DriftAnnotation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    for name in ["motor_id", "drift_timestamp"] {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("missing column `{name}`"),
            });
        }
    }
    let mut out = Vec::new();
    for record in rdr.deserialize() {
        out.push(record?);
    }
    Ok(out)
}

pub fn save_drift_annotations(path: impl AsRef<Path>, drifts: &[DriftAnnotation]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    wtr.write_record(["motor_id", "drift_timestamp"])?;
    for d in drifts {
        wtr.serialize(d)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Attaches annotated drift times to their motors. Annotations for unknown
/// motors are an error.
pub fn attach_drift_annotations(
    fleet: &mut [MotorSeries],
    drifts: &[DriftAnnotation],
) -> Result<()> {
    let mut per_motor: HashMap<&str, Vec<i64>> = HashMap::new();
    for d in drifts {
        per_motor.entry(&d.motor_id).or_default().push(d.drift_timestamp);
    }
    for series in fleet.iter_mut() {
        if let Some(times) = per_motor.remove(series.motor_id()) {
            series.set_drift_times(times)?;
        }
    }
    if let Some(unknown) = per_motor.keys().next() {
        return Err(Error::Series(format!(
            "drift annotation for unknown motor {unknown}"
        )));
    }
    Ok(())
}
