//! Session engine: simulation clock, laser control state machine and per-pulse
//! telemetry. The network service and the batch CLI both drive this type.

mod file;
mod protocol;
mod run;

use std::time::SystemTime;

use serde::{Deserialize, Serialize};

pub use file::{read_session, SessionFile, SessionHeader, SessionRecorder, FORMAT_VERSION};
pub use protocol::{ClientMessage, ServerBody, ServerMessage};
pub use run::{run, run_many, LaserWindow, RunSpec};

use crate::acoustic::{acquire_arrivals, Arrival};
use crate::dsp::{extract_peak, AmplitudeSample};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::monitor::{Monitor, StageLabel};
use crate::rng;
use crate::scenario::{Scenario, ScenarioRegistry};
use crate::tissue::{advance, initial_pressure, Stage, TissueState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionState {
    Idle,
    Running,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandKind {
    LaserOn,
    LaserOff,
    SetScenario,
    Reset,
    EndSession,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub kind: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl ControlCommand {
    pub fn new(kind: CommandKind) -> Self {
        Self {
            kind,
            payload: None,
        }
    }

    pub fn set_scenario(name: impl Into<String>) -> Self {
        Self {
            kind: CommandKind::SetScenario,
            payload: Some(name.into()),
        }
    }
}

/// Acknowledgment of an accepted command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub state: SessionState,
    pub laser_on: bool,
    pub scenario: String,
}

/// One record per laser pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub session_id: String,
    pub pulse_index: u64,
    /// Accumulated laser-on time at the pulse, s.
    pub irradiation_time: f64,
    /// Time since the session started running, including laser-off periods, s.
    pub session_time: f64,
    /// V
    pub amplitude: f64,
    pub stage: StageLabel,
    pub alarm_active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_stage: Option<Stage>,
}

impl TelemetryRecord {
    pub fn sample(&self) -> AmplitudeSample {
        AmplitudeSample {
            irradiation_time: self.irradiation_time,
            amplitude: self.amplitude,
            pulse_index: self.pulse_index,
        }
    }
}

const NANOS: f64 = 1e9;

fn to_nanos(seconds: f64) -> Result<u64> {
    if !(seconds.is_finite() && seconds >= 0.0) {
        return Err(Error::invalid(format!("time step {seconds} s is invalid")));
    }
    Ok((seconds * NANOS).round() as u64)
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    scenario: Scenario,
    seed: u64,
    created_at: SystemTime,
    state: SessionState,
    laser_on: bool,
    tissue: TissueState,
    monitor: Monitor,
    pulses: u64,
    laser_ns: u64,
    clock_ns: u64,
    records: Vec<TelemetryRecord>,
    exec: Exec,
}

mod seed_tag {
    pub const TISSUE: u64 = 1;
    pub const ACQUISITION: u64 = 2;
}

impl Session {
    pub fn new(id: impl Into<String>, scenario: Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let tissue = TissueState::new(
            &scenario.kinetics,
            scenario.depth,
            rng::derive(seed, &[seed_tag::TISSUE]),
        );
        let monitor = Monitor::new(scenario.monitor);
        Ok(Self {
            id: id.into(),
            scenario,
            seed,
            created_at: SystemTime::now(),
            state: SessionState::Idle,
            laser_on: false,
            tissue,
            monitor,
            pulses: 0,
            laser_ns: 0,
            clock_ns: 0,
            records: Vec::new(),
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn created_at(&self) -> SystemTime {
        self.created_at
    }
    pub fn state(&self) -> SessionState {
        self.state
    }
    pub fn laser_on(&self) -> bool {
        self.laser_on
    }
    pub fn tissue(&self) -> &TissueState {
        &self.tissue
    }
    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }
    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }
    /// Session clock, s.
    pub fn clock(&self) -> f64 {
        self.clock_ns as f64 / NANOS
    }
    /// Accumulated laser-on time, s.
    pub fn laser_time(&self) -> f64 {
        self.laser_ns as f64 / NANOS
    }

    pub fn header(&self) -> SessionHeader {
        SessionHeader {
            format: FORMAT_VERSION.to_string(),
            session_id: self.id.clone(),
            seed: self.seed,
            scenario: self.scenario.clone(),
        }
    }

    fn ack(&self) -> Ack {
        Ack {
            state: self.state,
            laser_on: self.laser_on,
            scenario: self.scenario.name.clone(),
        }
    }

    fn reset_to(&mut self, scenario: Scenario) -> Result<()> {
        let fresh = Session::new(self.id.clone(), scenario, self.seed)?.with_exec(self.exec);
        *self = Self {
            created_at: self.created_at,
            ..fresh
        };
        Ok(())
    }

    pub fn handle_control(&mut self, cmd: &ControlCommand, registry: &ScenarioRegistry) -> Result<Ack> {
        use CommandKind::*;
        use SessionState::*;
        match (cmd.kind, self.state) {
            (LaserOn, Idle | Running) => {
                self.state = Running;
                self.laser_on = true;
            }
            (LaserOn, Stopped) => {
                return Err(Error::state("session_stopped", "cannot fire the laser in a stopped session"))
            }
            (LaserOff, Running) => self.laser_on = false,
            (LaserOff, _) => {
                return Err(Error::state("not_running", "laser can only be switched off while running"))
            }
            (SetScenario, Idle | Stopped) => {
                let name = cmd
                    .payload
                    .as_deref()
                    .ok_or_else(|| Error::state("missing_payload", "SetScenario needs a scenario name"))?;
                let scenario = registry.get(name)?.clone();
                self.reset_to(scenario)?;
            }
            (SetScenario, Running) => {
                return Err(Error::state("scenario_locked", "scenario cannot change while running"))
            }
            (Reset, _) => self.reset_to(self.scenario.clone())?,
            (EndSession, Idle | Running) => {
                self.state = Stopped;
                self.laser_on = false;
            }
            (EndSession, Stopped) => {
                return Err(Error::state("already_stopped", "session already ended"))
            }
        }
        Ok(self.ack())
    }

    /// Advances the session clock by `wall_dt` seconds and fires every pulse due
    /// while the laser is on. Pulse `n` fires at laser-on time `n / rate`.
    pub fn tick(&mut self, wall_dt: f64) -> Result<Vec<TelemetryRecord>> {
        if self.state != SessionState::Running {
            return Err(Error::state(
                "not_running",
                format!("tick requires a running session, state is {:?}", self.state),
            ));
        }
        let dt_ns = to_nanos(wall_dt)?;
        let mut out = Vec::new();
        if !self.laser_on {
            if dt_ns > 0 {
                self.tissue = advance(&self.tissue, dt_ns as f64 / NANOS, false, &self.scenario.kinetics);
            }
            self.clock_ns += dt_ns;
            return Ok(out);
        }
        let period_ns = (NANOS / self.scenario.laser.repetition_rate).round() as u64;
        let start_laser = self.laser_ns;
        let start_clock = self.clock_ns;
        let end_laser = start_laser + dt_ns;
        while self.pulses * period_ns < end_laser {
            let pulse_ns = self.pulses * period_ns;
            let session_ns = start_clock + pulse_ns.saturating_sub(start_laser);
            out.push(self.fire(pulse_ns, session_ns)?);
        }
        self.laser_ns = end_laser;
        self.clock_ns = start_clock + dt_ns;
        Ok(out)
    }

    fn fire(&mut self, pulse_ns: u64, session_ns: u64) -> Result<TelemetryRecord> {
        let t = pulse_ns as f64 / NANOS;
        let dt = t - self.tissue.elapsed_irradiation;
        if dt > 0.0 {
            self.tissue = advance(&self.tissue, dt, true, &self.scenario.kinetics);
        }
        let sc = &self.scenario;
        let fluence = sc.laser.fluence();
        let mut arrivals = Vec::with_capacity(sc.static_layers.len() + 1);
        for layer in &sc.static_layers {
            arrivals.push(Arrival {
                pressure: initial_pressure(&sc.optics.with_absorption(layer.absorption_coeff), fluence)?,
                depth: layer.depth,
            });
        }
        arrivals.push(Arrival {
            pressure: initial_pressure(
                &sc.optics.with_absorption(self.tissue.effective_absorption()),
                fluence,
            )?,
            depth: self.tissue.depth,
        });
        let acq = crate::acoustic::AcquisitionConfig {
            seed: rng::derive(self.seed, &[seed_tag::ACQUISITION]),
            ..sc.acquisition
        };
        let trace = acquire_arrivals(&arrivals, &sc.transducer, &acq, t, self.pulses, self.exec)?;
        let detection = extract_peak(&trace, &sc.wavelet, &sc.selector)?;
        let update = self.monitor.append(detection.sample)?;
        let record = TelemetryRecord {
            session_id: self.id.clone(),
            pulse_index: self.pulses,
            irradiation_time: t,
            session_time: session_ns as f64 / NANOS,
            amplitude: detection.sample.amplitude,
            stage: update.estimate.stage,
            alarm_active: update.alarm.active,
            ground_truth_stage: sc
                .synthetic
                .then(|| sc.kinetics.stage_at(self.tissue.elapsed_irradiation)),
        };
        self.pulses += 1;
        self.records.push(record.clone());
        Ok(record)
    }
}

/// Creates sessions with ids unique for the lifetime of the service.
#[derive(Debug, Clone, Default)]
pub struct SessionFactory {
    registry: ScenarioRegistry,
    created: u64,
}

impl SessionFactory {
    pub fn new(registry: ScenarioRegistry) -> Self {
        Self {
            registry,
            created: 0,
        }
    }

    pub fn registry(&self) -> &ScenarioRegistry {
        &self.registry
    }

    pub fn create_session(&mut self, scenario: &str, seed: u64) -> Result<Session> {
        let sc = self.registry.get(scenario)?.clone();
        self.created += 1;
        let id = format!("{scenario}-{seed}-{:04}", self.created);
        Session::new(id, sc, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn running(name: &str) -> (Session, ScenarioRegistry) {
        let reg = ScenarioRegistry::builtin();
        let mut f = SessionFactory::new(reg.clone());
        let mut s = f.create_session(name, 42).unwrap();
        s.handle_control(&ControlCommand::new(CommandKind::LaserOn), &reg)
            .unwrap();
        (s, reg)
    }

    #[test]
    fn create_session_examples() {
        let mut f = SessionFactory::default();
        let s = f.create_session("phantom_tattoo", 1).unwrap();
        assert_eq!(s.state(), SessionState::Idle);
        assert_eq!(s.tissue().depth, 2.4e-3);
        assert_eq!(s.scenario().laser.repetition_rate, 5.0);
        let s2 = f.create_session("phantom_tattoo", 1).unwrap();
        assert_ne!(s.id(), s2.id());
        assert!(matches!(
            f.create_session("unknown", 1),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn one_second_at_five_hertz_is_five_records() {
        let (mut s, _) = running("phantom_tattoo");
        let recs = s.tick(1.0).unwrap();
        assert_eq!(recs.len(), 5);
        let times: Vec<f64> = recs.iter().map(|r| r.irradiation_time).collect();
        assert_eq!(times, vec![0.0, 0.2, 0.4, 0.6, 0.8]);
        assert_eq!(s.tick(0.2).unwrap().len(), 1);
    }

    #[test]
    fn laser_off_emits_nothing_and_freezes_tissue() {
        let (mut s, reg) = running("phantom_tattoo");
        s.tick(2.0).unwrap();
        s.handle_control(&ControlCommand::new(CommandKind::LaserOff), &reg)
            .unwrap();
        let before = *s.tissue();
        assert!(s.tick(10.0).unwrap().is_empty());
        assert_eq!(s.tissue().mu_a_current, before.mu_a_current);
        assert_eq!(s.tissue().elapsed_irradiation, before.elapsed_irradiation);
        assert_eq!(s.laser_time(), 2.0);
        assert_eq!(s.clock(), 12.0);
        s.handle_control(&ControlCommand::new(CommandKind::LaserOn), &reg)
            .unwrap();
        let recs = s.tick(0.5).unwrap();
        assert_eq!(recs[0].irradiation_time, 2.0);
        assert_eq!(recs[0].session_time, 12.0);
    }

    #[test]
    fn state_machine() {
        let reg = ScenarioRegistry::builtin();
        let mut s = SessionFactory::default()
            .create_session("pigskin_tattoo_water", 3)
            .unwrap();
        assert!(matches!(s.tick(1.0), Err(Error::State { code: "not_running", .. })));
        assert!(s
            .handle_control(&ControlCommand::new(CommandKind::LaserOff), &reg)
            .is_err());
        let ack = s
            .handle_control(&ControlCommand::new(CommandKind::LaserOn), &reg)
            .unwrap();
        assert_eq!((ack.state, ack.laser_on), (SessionState::Running, true));
        assert!(matches!(
            s.handle_control(&ControlCommand::set_scenario("phantom_tattoo"), &reg),
            Err(Error::State { code: "scenario_locked", .. })
        ));
        s.tick(1.0).unwrap();
        let ack = s
            .handle_control(&ControlCommand::new(CommandKind::EndSession), &reg)
            .unwrap();
        assert_eq!((ack.state, ack.laser_on), (SessionState::Stopped, false));
        assert!(s
            .handle_control(&ControlCommand::new(CommandKind::LaserOn), &reg)
            .is_err());
        assert!(matches!(
            s.handle_control(&ControlCommand::set_scenario("missing"), &reg),
            Err(Error::NotFound(_))
        ));
        let ack = s
            .handle_control(&ControlCommand::set_scenario("phantom_tattoo"), &reg)
            .unwrap();
        assert_eq!(ack.state, SessionState::Idle);
        assert_eq!(ack.scenario, "phantom_tattoo");
        assert!(s.records().is_empty());
    }

    #[test]
    fn reset_reseeds() {
        let (mut s, reg) = running("pigskin_tattoo_water");
        let first = s.tick(3.0).unwrap();
        s.handle_control(&ControlCommand::new(CommandKind::Reset), &reg)
            .unwrap();
        assert_eq!(s.state(), SessionState::Idle);
        assert_eq!(s.tissue().elapsed_irradiation, 0.0);
        s.handle_control(&ControlCommand::new(CommandKind::LaserOn), &reg)
            .unwrap();
        assert_eq!(s.tick(3.0).unwrap(), first);
    }

    #[test]
    fn ground_truth_only_for_synthetic() {
        let (mut s, _) = running("phantom_tattoo");
        assert!(s.tick(0.2).unwrap()[0].ground_truth_stage.is_some());
        let mut sc = Scenario::phantom_tattoo();
        sc.synthetic = false;
        let mut s = Session::new("x", sc, 1).unwrap();
        s.handle_control(&ControlCommand::new(CommandKind::LaserOn), &ScenarioRegistry::builtin())
            .unwrap();
        assert!(s.tick(0.2).unwrap()[0].ground_truth_stage.is_none());
    }

    #[test]
    fn sequential_and_parallel_sessions_agree() {
        let (s, _) = running("pigskin_tattoo_water");
        let mut a = s.clone().with_exec(Exec::Sequential);
        let mut b = s.with_exec(Exec::default());
        assert_eq!(a.tick(2.0).unwrap(), b.tick(2.0).unwrap());
    }
}
