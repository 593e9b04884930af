//! Post-hoc analysis of a recorded session: the monitor is re-run over the
//! stored amplitudes, so live and replayed analyses agree exactly.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::monitor::{
    fit_exponential, AlarmReason, CsvRow, ExpFit, Monitor, MonitorConfig, StageLabel, Transition,
};
use crate::session::{SessionFile, TelemetryRecord};

pub const INSUFFICIENT_DATA: &str = "insufficient data";

/// Summary written by `analyze`. Field names and units are part of the
/// documented output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub session_id: String,
    pub scenario: String,
    pub seed: u64,
    pub records: usize,
    /// "ok" or "insufficient data".
    pub status: String,
    /// Irradiation-time span used for the stage-A fit, s.
    pub stage_a_window: Option<[f64; 2]>,
    pub stage_a_fit: Option<ExpFit>,
    pub transitions: Vec<Transition>,
    pub alarm_at: Option<f64>,
    pub alarm_reason: Option<AlarmReason>,
    pub final_stage: StageLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub report: Report,
    pub rows: Vec<CsvRow>,
}

/// Re-runs the monitor over `records` and fits the stage-A decay.
pub fn analyze_records(records: &[TelemetryRecord], cfg: &MonitorConfig) -> Result<Analysis> {
    let mut monitor = Monitor::new(*cfg);
    let mut rows = Vec::with_capacity(records.len());
    let mut alarm_at = None;
    for r in records {
        let u = monitor.append(r.sample())?;
        if u.alarm.active && alarm_at.is_none() {
            alarm_at = u.alarm.raised_at;
        }
        rows.push(CsvRow {
            pulse_index: r.pulse_index,
            irradiation_time: r.irradiation_time,
            amplitude: r.amplitude,
            stage: u.estimate.stage,
            alarm_active: u.alarm.active,
        });
    }
    let transitions = monitor.transitions().to_vec();
    let window = stage_a_window(records, &transitions);
    let fit = window.and_then(|w| fit_exponential(monitor.series(), w).ok());
    let report = Report {
        session_id: String::new(),
        scenario: String::new(),
        seed: 0,
        records: records.len(),
        status: if fit.is_some() { "ok" } else { INSUFFICIENT_DATA }.into(),
        stage_a_window: window.filter(|_| fit.is_some()),
        stage_a_fit: fit,
        transitions,
        alarm_at,
        alarm_reason: monitor.alarm().reason,
        final_stage: monitor.estimate().stage,
    };
    Ok(Analysis { report, rows })
}

pub fn analyze(file: &SessionFile) -> Result<Analysis> {
    let mut a = analyze_records(&file.records, &file.header.scenario.monitor)?;
    a.report.session_id = file.header.session_id.clone();
    a.report.scenario = file.header.scenario.name.clone();
    a.report.seed = file.header.seed;
    Ok(a)
}

/// From the first sample to the detected end of stage A, or to the last
/// sample when no transition was seen.
fn stage_a_window(records: &[TelemetryRecord], transitions: &[Transition]) -> Option<[f64; 2]> {
    let first = records.first()?.irradiation_time;
    let end = transitions
        .iter()
        .find(|t| t.from == StageLabel::Scattering)
        .map_or(records.last()?.irradiation_time, |t| t.at);
    Some([first, end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::scenario::ScenarioRegistry;
    use crate::session::{run, RunSpec};

    #[test]
    fn empty_session_is_insufficient() {
        let f = run(
            &RunSpec::continuous("phantom_tattoo", 0.0, 1),
            &ScenarioRegistry::builtin(),
            Exec::default(),
        )
        .unwrap();
        let a = analyze(&f).unwrap();
        assert_eq!(a.report.status, INSUFFICIENT_DATA);
        assert!(a.report.stage_a_fit.is_none() && a.rows.is_empty());
        assert_eq!(a.report.final_stage, StageLabel::Insufficient);
    }

    #[test]
    fn rows_match_live_labels() {
        let f = run(
            &RunSpec::continuous("pigskin_tattoo_water", 12.0, 3),
            &ScenarioRegistry::builtin(),
            Exec::default(),
        )
        .unwrap();
        let a = analyze(&f).unwrap();
        assert_eq!(a.rows.len(), f.records.len());
        for (row, rec) in a.rows.iter().zip(&f.records) {
            assert_eq!(row.stage, rec.stage);
            assert_eq!(row.alarm_active, rec.alarm_active);
            assert_eq!(row.amplitude, rec.amplitude);
        }
        assert_eq!(a.report.status, "ok");
        assert!(a.report.stage_a_fit.unwrap().k > 0.0);
    }
}
