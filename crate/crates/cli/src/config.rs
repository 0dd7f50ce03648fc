//! Scenario configuration files: a TOML document mapping onto
//! [`ScenarioConfig`] plus the metrics settle window. Every unspecified
//! field takes the baseline value, so an empty document reproduces the
//! baseline scenario. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use dobsim::control::{ControllerMode, PdGains};
use dobsim::plant::{PlantPair, ServoParams, State};
use dobsim::signals::{DisturbanceSpec, ReferenceSpec};
use dobsim::sim::{defaults, NoiseStd, PlantModel, ScenarioConfig};
use dobsim::Error;

/// Nominal plant parameters and the true-plant mismatch factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    /// Nominal rotor inertia (kg·m²).
    pub inertia: f64,
    /// Nominal viscous friction (N·m·s/rad).
    pub viscous: f64,
    /// -1 for a dissipative open-loop plant (default), +1 for the opposite
    /// sign convention.
    pub damping_sign: i8,
    /// True-plant inertia as a multiple of the nominal value.
    pub inertia_true_scale: f64,
    /// True-plant viscous friction as a multiple of the nominal value.
    pub viscous_true_scale: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            inertia: defaults::INERTIA,
            viscous: defaults::VISCOUS,
            damping_sign: -1,
            inertia_true_scale: 1.0,
            viscous_true_scale: 1.0,
        }
    }
}

/// Time grid and plant-advance mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    /// Sampling period (s).
    pub ts: f64,
    /// Scenario length (s).
    pub duration: f64,
    /// Ground-truth integrator substeps per control period.
    pub substeps: usize,
    pub plant_model: PlantModel,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            ts: defaults::TS,
            duration: defaults::DURATION,
            substeps: defaults::SUBSTEPS,
            plant_model: PlantModel::ContinuousTruth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdSection {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdSection {
    fn default() -> Self {
        Self {
            kp: defaults::KP,
            kd: defaults::KD,
        }
    }
}

/// Measurement-noise standard deviations and the generator seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// rad
    pub q: f64,
    /// rad/s
    pub qdot: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Fraction of the trace skipped as transient before computing RMS
    /// figures.
    pub settle_fraction: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            settle_fraction: defaults::SETTLE_FRACTION,
        }
    }
}

fn default_mode() -> ControllerMode {
    ControllerMode::PdPlusCdob {
        g: defaults::OBSERVER_GAIN,
    }
}

/// One scenario configuration document.
///
/// The scalar `torque_limit` is declared first so the serialized document
/// emits it before the tables, as TOML requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Optional symmetric torque limit (N·m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque_limit: Option<f64>,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default = "default_mode")]
    pub mode: ControllerMode,
    #[serde(default)]
    pub pd: PdSection,
    #[serde(default = "defaults::disturbance")]
    pub disturbance: DisturbanceSpec,
    #[serde(default = "defaults::tracking_reference")]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub initial_state: State,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            torque_limit: None,
            plant: PlantSection::default(),
            sampling: SamplingSection::default(),
            mode: default_mode(),
            pd: PdSection::default(),
            disturbance: defaults::disturbance(),
            reference: defaults::tracking_reference(),
            initial_state: State::default(),
            noise: NoiseSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

/// A configuration resolved against the defaults and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: ScenarioConfig,
    pub settle_fraction: f64,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Re-emits the document with all defaults resolved. Exercised by the
    /// round-trip tests.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn resolve(&self) -> Result<Resolved, Error> {
        let nominal = ServoParams::with_damping_sign(
            self.plant.inertia,
            self.plant.viscous,
            self.plant.damping_sign,
        )?;
        let true_params = ServoParams::with_damping_sign(
            self.plant.inertia * self.plant.inertia_true_scale,
            self.plant.viscous * self.plant.viscous_true_scale,
            self.plant.damping_sign,
        )?;
        if !(0.0..1.0).contains(&self.metrics.settle_fraction) {
            return Err(Error::InvalidConfig(format!(
                "settle_fraction must be in [0, 1), got {}",
                self.metrics.settle_fraction
            )));
        }
        let scenario = ScenarioConfig {
            pair: PlantPair::new(true_params, nominal),
            ts: self.sampling.ts,
            duration: self.sampling.duration,
            substeps: self.sampling.substeps,
            mode: self.mode,
            pd: PdGains {
                kp: self.pd.kp,
                kd: self.pd.kd,
            },
            disturbance: self.disturbance.clone(),
            reference: self.reference,
            initial_state: self.initial_state,
            noise_std: NoiseStd {
                q: self.noise.q,
                qdot: self.noise.qdot,
            },
            seed: self.noise.seed,
            plant_model: self.sampling.plant_model,
            torque_limit: self.torque_limit,
        };
        scenario.validate()?;
        Ok(Resolved {
            scenario,
            settle_fraction: self.metrics.settle_fraction,
        })
    }
}
