//! Streaming analysis of the selected-peak amplitude: decay fit, stage
//! classification and the overtreatment alarm.

mod classify;
mod fit;
mod series;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use classify::{
    baseline_check, classify_stage, overtreatment_alarm, Alarm, AlarmReason, MonitorConfig,
    StageClassifier, StageEstimate, StageLabel, Transition,
};
pub use fit::{fit_exponential, fit_points, ExpFit};
pub use series::AmplitudeSeries;

use crate::dsp::AmplitudeSample;
use crate::error::Result;

/// Result of feeding one sample to the monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorUpdate {
    pub sample: AmplitudeSample,
    pub estimate: StageEstimate,
    pub alarm: Alarm,
}

/// Consistent read-only view of the monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSnapshot {
    pub series: AmplitudeSeries,
    pub estimate: StageEstimate,
    pub alarm: Alarm,
    pub transitions: Vec<Transition>,
}

/// Single-writer monitor. Readers take [`Monitor::snapshot`] values, which are
/// detached copies and never block later appends.
#[derive(Debug, Clone)]
pub struct Monitor {
    series: AmplitudeSeries,
    classifier: StageClassifier,
    alarm: Alarm,
}

impl Monitor {
    pub fn new(cfg: MonitorConfig) -> Self {
        Self {
            series: AmplitudeSeries::new(),
            classifier: StageClassifier::new(cfg),
            alarm: Alarm::default(),
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        self.classifier.config()
    }

    pub fn append(&mut self, sample: AmplitudeSample) -> Result<MonitorUpdate> {
        self.series.append(sample)?;
        let estimate = self.classifier.push(&sample);
        self.alarm = overtreatment_alarm(
            &self.alarm,
            &estimate,
            sample.irradiation_time,
            self.classifier.config(),
        );
        Ok(MonitorUpdate {
            sample,
            estimate,
            alarm: self.alarm,
        })
    }

    pub fn series(&self) -> &AmplitudeSeries {
        &self.series
    }

    pub fn estimate(&self) -> StageEstimate {
        self.classifier.estimate()
    }

    pub fn alarm(&self) -> Alarm {
        self.alarm
    }

    pub fn transitions(&self) -> &[Transition] {
        self.classifier.transitions()
    }

    pub fn snapshot(&self) -> Arc<MonitorSnapshot> {
        Arc::new(MonitorSnapshot {
            series: self.series.clone(),
            estimate: self.estimate(),
            alarm: self.alarm,
            transitions: self.transitions().to_vec(),
        })
    }
}

pub const CSV_HEADER: &str = "pulse_index,irradiation_time_s,amplitude_v,stage,alarm_active";

/// One CSV row. Floats use the shortest representation that parses back to
/// the identical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub pulse_index: u64,
    pub irradiation_time: f64,
    pub amplitude: f64,
    pub stage: StageLabel,
    pub alarm_active: bool,
}

impl CsvRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.pulse_index,
            self.irradiation_time,
            self.amplitude,
            self.stage.as_str(),
            self.alarm_active
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = || crate::Error::invalid(format!("malformed CSV row {line:?}"));
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(Self {
            pulse_index: f[0].parse().map_err(|_| bad())?,
            irradiation_time: f[1].parse().map_err(|_| bad())?,
            amplitude: f[2].parse().map_err(|_| bad())?,
            stage: f[3].parse()?,
            alarm_active: f[4].parse().map_err(|_| bad())?,
        })
    }
}

pub fn write_csv<W: Write>(mut out: W, rows: &[CsvRow]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_line())?;
    }
    Ok(())
}
