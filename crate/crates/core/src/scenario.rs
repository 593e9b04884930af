//! Named scenario configurations.
//!
//! The built-ins mirror a tattooed agar phantom, tattooed pig skin in water,
//! untattooed pig skin (baseline control) and tattooed pig skin under
//! coupling gel.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acoustic::{AcquisitionConfig, TransducerModel};
use crate::dsp::{PeakSelector, WaveletConfig};
use crate::error::{Error, Result};
use crate::monitor::MonitorConfig;
use crate::tissue::{LaserPulseConfig, OpticalProperties, TreatmentKinetics};

/// A static absorber above the monitored one (e.g. the skin surface); it
/// produces the first arrival in skin traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticLayer {
    /// m
    pub depth: f64,
    /// 1/m
    pub absorption_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub optics: OpticalProperties,
    pub laser: LaserPulseConfig,
    pub kinetics: TreatmentKinetics,
    /// Depth of the monitored absorber, m.
    pub depth: f64,
    #[serde(default)]
    pub static_layers: Vec<StaticLayer>,
    pub transducer: TransducerModel,
    pub acquisition: AcquisitionConfig,
    pub wavelet: WaveletConfig,
    pub selector: PeakSelector,
    pub monitor: MonitorConfig,
    /// Expected amplitude band for baseline checks, V.
    #[serde(default)]
    pub baseline_band: Option<[f64; 2]>,
    /// Ground-truth stages are attached to telemetry only for synthetic scenarios.
    #[serde(default = "yes")]
    pub synthetic: bool,
}

fn yes() -> bool {
    true
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        self.laser.validate()?;
        self.kinetics.validate()?;
        self.acquisition.validate(&self.transducer)?;
        self.monitor.validate()?;
        self.wavelet.validate(self.acquisition.num_samples)?;
        if !(self.depth > 0.0) || self.static_layers.iter().any(|l| !(l.depth > 0.0)) {
            return Err(Error::Config("absorber depths must be positive".into()));
        }
        Ok(())
    }

    fn skin_base(name: &str, description: &str) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            optics: OpticalProperties::default(),
            laser: LaserPulseConfig::default(),
            kinetics: TreatmentKinetics::default(),
            depth: 2.4e-3,
            static_layers: vec![StaticLayer {
                depth: 1.2e-3,
                absorption_coeff: 40.0,
            }],
            transducer: TransducerModel::default(),
            acquisition: AcquisitionConfig::default(),
            wavelet: WaveletConfig::default(),
            selector: PeakSelector::nth(2),
            monitor: MonitorConfig::default(),
            baseline_band: None,
            synthetic: true,
        }
    }

    pub fn phantom_tattoo() -> Self {
        Self {
            name: "phantom_tattoo".into(),
            description: "black ink injected 2.4 mm deep in a white agar phantom, water coupling; \
                          irradiated until the absorber is destroyed"
                .into(),
            kinetics: TreatmentKinetics {
                t_scatter: 40.0,
                t_scorch: 55.0,
                scorch_decay_rate: 0.03,
                ..TreatmentKinetics::default()
            },
            static_layers: Vec::new(),
            selector: PeakSelector::global_max(),
            ..Self::skin_base("", "")
        }
    }

    pub fn pigskin_tattoo_water() -> Self {
        Self::skin_base(
            "pigskin_tattoo_water",
            "red-tattooed ex vivo pig skin, water coupling; second envelope peak monitored",
        )
    }

    pub fn pigskin_untattooed() -> Self {
        Self {
            kinetics: TreatmentKinetics {
                mu_a_initial: 61.5,
                mu_a_floor: 61.0,
                decay_rate: 0.05,
                t_scatter: 0.2,
                t_scorch: 0.4,
                oscillation_sigma: 0.0,
                scorch_decay_rate: 0.0012,
            },
            baseline_band: Some([1.5, 2.0]),
            ..Self::skin_base(
                "pigskin_untattooed",
                "ex vivo pig skin without tattoo; the dermal signal only declines slowly",
            )
        }
    }

    pub fn pigskin_tattoo_gel() -> Self {
        let base = Self::skin_base(
            "pigskin_tattoo_gel",
            "red-tattooed pig skin under ultrasonic coupling gel: reduced transmission and \
             higher noise; pigment scattering plateaus without scorching within 70 s",
        );
        Self {
            kinetics: TreatmentKinetics {
                t_scatter: 30.0,
                t_scorch: 75.0,
                ..TreatmentKinetics::default()
            },
            acquisition: AcquisitionConfig {
                speed_of_sound: 1520.0,
                coupling_efficiency: 0.8,
                noise_sigma: 1.5 * base.acquisition.noise_sigma,
                ..base.acquisition
            },
            monitor: MonitorConfig {
                oscillation_std_threshold: 0.075,
                ..MonitorConfig::default()
            },
            ..base
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRegistry {
    scenarios: BTreeMap<String, Scenario>,
}

impl Default for ScenarioRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ScenarioRegistry {
    pub fn builtin() -> Self {
        let mut scenarios = BTreeMap::new();
        for s in [
            Scenario::phantom_tattoo(),
            Scenario::pigskin_tattoo_water(),
            Scenario::pigskin_untattooed(),
            Scenario::pigskin_tattoo_gel(),
        ] {
            scenarios.insert(s.name.clone(), s);
        }
        Self { scenarios }
    }

    /// Adds or replaces scenarios from a JSON array of scenario objects.
    pub fn extend_from_json(&mut self, json: &str) -> Result<()> {
        let list: Vec<Scenario> = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("scenario registry: {e}")))?;
        for s in list {
            s.validate()?;
            self.scenarios.insert(s.name.clone(), s);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = Self::builtin();
        r.extend_from_json(&std::fs::read_to_string(path)?)?;
        Ok(r)
    }

    pub fn get(&self, name: &str) -> Result<&Scenario> {
        self.scenarios
            .get(name)
            .ok_or_else(|| Error::NotFound(format!("scenario {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scenarios.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scenario> {
        self.scenarios.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        let r = ScenarioRegistry::builtin();
        let names: Vec<&str> = r.names().collect();
        assert_eq!(
            names,
            [
                "phantom_tattoo",
                "pigskin_tattoo_gel",
                "pigskin_tattoo_water",
                "pigskin_untattooed"
            ]
        );
        for s in r.iter() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn phantom_geometry_and_laser() {
        let s = ScenarioRegistry::builtin().get("phantom_tattoo").unwrap().clone();
        assert_eq!(s.depth, 2.4e-3);
        assert_eq!(s.laser.repetition_rate, 5.0);
        assert_eq!(s.laser.pulse_energy, 0.067);
        assert_eq!(s.laser.wavelength, 532.0);
        assert_eq!(s.acquisition.gain_db, 46.0);
        assert_eq!(s.acquisition.num_averages, 60);
        assert_eq!(s.transducer.center_frequency, 5e6);
    }

    #[test]
    fn untattooed_band() {
        let r = ScenarioRegistry::builtin();
        assert_eq!(r.get("pigskin_untattooed").unwrap().baseline_band, Some([1.5, 2.0]));
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(
            ScenarioRegistry::builtin().get("nope"),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn registry_extends_from_json() {
        let mut custom = Scenario::phantom_tattoo();
        custom.name = "deep_phantom".into();
        custom.depth = 3.0e-3;
        let json = serde_json::to_string(&vec![custom.clone()]).unwrap();
        let mut r = ScenarioRegistry::builtin();
        r.extend_from_json(&json).unwrap();
        assert_eq!(r.get("deep_phantom").unwrap(), &custom);
        assert!(r.extend_from_json("{").is_err());
    }
}
