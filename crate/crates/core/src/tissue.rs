//! Optical state of the irradiated tissue and the per-pulse initial pressure.
//!
//! The pigment's absorption coefficient relaxes exponentially toward a floor
//! while the pigment scatters (stage A), oscillates around the level reached
//! once scattering is complete (stage B), and finally the scorched tissue's
//! effective source strength declines again (stage C).

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Thermoelastic and absorption properties entering `p0 = Γ·η_th·μ_a·F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalProperties {
    /// Grüneisen parameter Γ (dimensionless, held constant).
    pub grueneisen: f64,
    /// Optical-to-pressure conversion efficiency η_th in [0, 1].
    pub conversion_efficiency: f64,
    /// Absorption coefficient μ_a in 1/m.
    pub absorption_coeff: f64,
}

impl Default for OpticalProperties {
    fn default() -> Self {
        Self {
            grueneisen: 0.2,
            conversion_efficiency: 0.5,
            absorption_coeff: 100.0,
        }
    }
}

impl OpticalProperties {
    pub fn with_absorption(self, absorption_coeff: f64) -> Self {
        Self {
            absorption_coeff,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grueneisen.is_finite() && self.grueneisen > 0.0) {
            return Err(Error::invalid(format!(
                "grueneisen must be positive, got {}",
                self.grueneisen
            )));
        }
        if !(0.0..=1.0).contains(&self.conversion_efficiency) {
            return Err(Error::invalid(format!(
                "conversion_efficiency must lie in [0, 1], got {}",
                self.conversion_efficiency
            )));
        }
        if !(self.absorption_coeff.is_finite() && self.absorption_coeff >= 0.0) {
            return Err(Error::invalid(format!(
                "absorption_coeff must be nonnegative, got {}",
                self.absorption_coeff
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserPulseConfig {
    /// nm
    pub wavelength: f64,
    /// J
    pub pulse_energy: f64,
    /// m
    pub spot_diameter: f64,
    /// Hz
    pub repetition_rate: f64,
}

impl Default for LaserPulseConfig {
    fn default() -> Self {
        Self {
            wavelength: 532.0,
            pulse_energy: 0.067,
            spot_diameter: 5.0e-3,
            repetition_rate: 5.0,
        }
    }
}

impl LaserPulseConfig {
    /// Radiant exposure per pulse over a flat-top spot, in J/m².
    pub fn fluence(&self) -> f64 {
        let r = self.spot_diameter / 2.0;
        self.pulse_energy / (PI * r * r)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pulse_energy", self.pulse_energy),
            ("repetition_rate", self.repetition_rate),
            ("spot_diameter", self.spot_diameter),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Timing and rates of the three-stage treatment response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentKinetics {
    /// 1/m
    pub mu_a_initial: f64,
    /// 1/m
    pub mu_a_floor: f64,
    /// 1/s
    pub decay_rate: f64,
    /// End of pigment scattering, s.
    pub t_scatter: f64,
    /// Onset of scorching, s.
    pub t_scorch: f64,
    /// Relative std of the stage-B multiplicative perturbation.
    pub oscillation_sigma: f64,
    /// 1/s
    pub scorch_decay_rate: f64,
}

impl Default for TreatmentKinetics {
    fn default() -> Self {
        Self {
            mu_a_initial: 100.0,
            mu_a_floor: 20.0,
            decay_rate: 0.05,
            t_scatter: 35.0,
            t_scorch: 50.0,
            oscillation_sigma: 0.08,
            scorch_decay_rate: 0.01,
        }
    }
}

impl TreatmentKinetics {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_a_floor >= 0.0 && self.mu_a_floor < self.mu_a_initial) {
            return Err(Error::invalid(format!(
                "need 0 <= mu_a_floor < mu_a_initial, got {} / {}",
                self.mu_a_floor, self.mu_a_initial
            )));
        }
        if !(self.t_scatter > 0.0 && self.t_scatter < self.t_scorch) {
            return Err(Error::invalid(format!(
                "need 0 < t_scatter < t_scorch, got {} / {}",
                self.t_scatter, self.t_scorch
            )));
        }
        if !(self.decay_rate > 0.0) {
            return Err(Error::invalid("decay_rate must be positive"));
        }
        if !(self.oscillation_sigma >= 0.0 && self.scorch_decay_rate >= 0.0) {
            return Err(Error::invalid(
                "oscillation_sigma and scorch_decay_rate must be nonnegative",
            ));
        }
        Ok(())
    }

    /// Closed-form stage-A absorption at irradiation time `t`.
    pub fn scattering_absorption(&self, t: f64) -> f64 {
        self.mu_a_floor + (self.mu_a_initial - self.mu_a_floor) * (-self.decay_rate * t).exp()
    }

    /// Absorption level held through stages B and C: the stage-A curve at `t_scatter`.
    pub fn plateau_absorption(&self) -> f64 {
        self.scattering_absorption(self.t_scatter)
    }

    pub fn stage_at(&self, elapsed: f64) -> Stage {
        if elapsed < self.t_scatter {
            Stage::Scattering
        } else if elapsed < self.t_scorch {
            Stage::Oscillation
        } else {
            Stage::Scorched
        }
    }
}

/// Treatment stage. Serialized as the single letters used on stage plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "A")]
    Scattering,
    #[serde(rename = "B")]
    Oscillation,
    #[serde(rename = "C")]
    Scorched,
}

impl Stage {
    pub fn letter(self) -> &'static str {
        match self {
            Stage::Scattering => "A",
            Stage::Oscillation => "B",
            Stage::Scorched => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueState {
    /// Accumulated laser-on time, s.
    pub elapsed_irradiation: f64,
    /// Accumulated time including laser-off periods, s.
    pub wall_clock: f64,
    /// 1/m
    pub mu_a_current: f64,
    pub stage: Stage,
    /// 0 before scorching, rising toward 1.
    pub scorch_level: f64,
    /// Depth of the monitored absorber, m.
    pub depth: f64,
    seed: u64,
    steps: u64,
}

impl TissueState {
    pub fn new(kinetics: &TreatmentKinetics, depth: f64, seed: u64) -> Self {
        Self {
            elapsed_irradiation: 0.0,
            wall_clock: 0.0,
            mu_a_current: kinetics.mu_a_initial,
            stage: Stage::Scattering,
            scorch_level: 0.0,
            depth,
            seed,
            steps: 0,
        }
    }

    /// Absorption seen by the photoacoustic source; scorching removes source strength.
    pub fn effective_absorption(&self) -> f64 {
        self.mu_a_current * (1.0 - self.scorch_level)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Initial pressure `Γ·η_th·μ_a·F` in Pa.
pub fn initial_pressure(props: &OpticalProperties, fluence: f64) -> Result<f64> {
    props.validate()?;
    if !(fluence.is_finite() && fluence >= 0.0) {
        return Err(Error::invalid(format!(
            "fluence must be finite and nonnegative, got {fluence}"
        )));
    }
    Ok(props.grueneisen * props.conversion_efficiency * props.absorption_coeff * fluence)
}

/// Advances the tissue by `dt` seconds. With the laser off only `wall_clock` moves.
pub fn advance(
    state: &TissueState,
    dt: f64,
    laser_on: bool,
    kinetics: &TreatmentKinetics,
) -> TissueState {
    debug_assert!(dt > 0.0, "advance requires dt > 0");
    let mut next = *state;
    next.wall_clock += dt;
    if !laser_on {
        return next;
    }
    next.elapsed_irradiation += dt;
    next.steps += 1;
    let t = next.elapsed_irradiation;
    next.stage = kinetics.stage_at(t);
    match next.stage {
        Stage::Scattering => {
            next.mu_a_current = kinetics.scattering_absorption(t);
            next.scorch_level = 0.0;
        }
        Stage::Oscillation => {
            let z: f64 = StandardNormal
                .sample(&mut rng::stream_rng(next.seed, &[stream::TISSUE, next.steps]));
            let level = kinetics.plateau_absorption() * (1.0 + kinetics.oscillation_sigma * z);
            next.mu_a_current = level.clamp(kinetics.mu_a_floor, kinetics.mu_a_initial);
            next.scorch_level = 0.0;
        }
        Stage::Scorched => {
            next.mu_a_current = kinetics.plateau_absorption();
            next.scorch_level =
                1.0 - (-kinetics.scorch_decay_rate * (t - kinetics.t_scorch)).exp();
        }
    }
    next
}

pub fn ground_truth_stage(state: &TissueState, kinetics: &TreatmentKinetics) -> Stage {
    kinetics.stage_at(state.elapsed_irradiation)
}
