//! Headless runs driven by a laser schedule.

use serde::{Deserialize, Serialize};

use super::{CommandKind, ControlCommand, SessionFactory, SessionFile, SessionState};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::scenario::ScenarioRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserWindow {
    pub on_at: f64,
    pub off_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub scenario: String,
    /// s
    pub duration: f64,
    pub seed: u64,
    /// Empty means the laser is on for the whole duration.
    pub schedule: Vec<LaserWindow>,
}

impl RunSpec {
    pub fn continuous(scenario: impl Into<String>, duration: f64, seed: u64) -> Self {
        Self {
            scenario: scenario.into(),
            duration,
            seed,
            schedule: Vec::new(),
        }
    }

    /// The effective schedule, sorted, after validation.
    pub fn windows(&self) -> Result<Vec<LaserWindow>> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::invalid(format!("duration {} is invalid", self.duration)));
        }
        if self.schedule.is_empty() {
            return Ok(if self.duration > 0.0 {
                vec![LaserWindow {
                    on_at: 0.0,
                    off_at: self.duration,
                }]
            } else {
                Vec::new()
            });
        }
        let mut w = self.schedule.clone();
        w.sort_by(|a, b| a.on_at.total_cmp(&b.on_at));
        for (i, win) in w.iter().enumerate() {
            if !(win.on_at >= 0.0 && win.on_at < win.off_at && win.off_at <= self.duration) {
                return Err(Error::invalid(format!(
                    "laser window [{}, {}] is not inside [0, {}]",
                    win.on_at, win.off_at, self.duration
                )));
            }
            if i > 0 && w[i - 1].off_at > win.on_at {
                return Err(Error::invalid("laser windows overlap"));
            }
        }
        Ok(w)
    }
}

/// Runs a schedule and returns the resulting session file.
pub fn run(spec: &RunSpec, registry: &ScenarioRegistry, exec: Exec) -> Result<SessionFile> {
    let windows = spec.windows()?;
    let mut factory = SessionFactory::new(registry.clone());
    let mut session = factory.create_session(&spec.scenario, spec.seed)?.with_exec(exec);
    let cmd = |k| ControlCommand::new(k);
    let mut now = 0.0;
    for w in &windows {
        if session.state() == SessionState::Running && w.on_at > now {
            session.tick(w.on_at - now)?;
        }
        session.handle_control(&cmd(CommandKind::LaserOn), registry)?;
        session.tick(w.off_at - w.on_at)?;
        session.handle_control(&cmd(CommandKind::LaserOff), registry)?;
        now = w.off_at;
    }
    if session.state() == SessionState::Running && spec.duration > now {
        session.tick(spec.duration - now)?;
    }
    session.handle_control(&cmd(CommandKind::EndSession), registry)?;
    SessionFile::new(session.header(), session.records().to_vec())
}

/// Runs independent specs, typically one scenario over many seeds. Output
/// order follows `specs` and does not depend on `exec`.
pub fn run_many(specs: &[RunSpec], registry: &ScenarioRegistry, exec: Exec) -> Result<Vec<SessionFile>> {
    exec.map_slice(specs, |spec| run(spec, registry, exec))
        .into_iter()
        .collect()
}
