//! Declarative generators for external disturbance torques and position
//! references.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::plant::State;

/// One sinusoidal component of a [`DisturbanceSpec::SineSum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineComponent {
    /// Amplitude (N·m).
    pub amplitude: f64,
    /// Frequency (Hz), nonnegative.
    pub frequency: f64,
    /// Phase (rad).
    #[serde(default)]
    pub phase: f64,
}

/// External disturbance torque as a function of time and state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    /// Constant torque (N·m).
    Constant { level: f64 },
    /// Affine-in-time torque `offset + slope·t`.
    Ramp { offset: f64, slope: f64 },
    /// Polynomial in time, `Σ coefficients[i]·tⁱ`.
    Poly { coefficients: Vec<f64> },
    /// Sum of sinusoids `Σ amplitude·sin(2π·frequency·t + phase)`.
    SineSum { components: Vec<SineComponent> },
    /// State-dependent torque: extra viscous drag, Coulomb friction, and
    /// quadratic aerodynamic-style drag.
    StateDependent {
        /// N·m·s/rad, multiplies velocity.
        extra_viscous: f64,
        /// N·m, multiplies sign(velocity); zero at rest.
        coulomb: f64,
        /// N·m·s²/rad², multiplies velocity·|velocity|.
        quadratic_drag: f64,
    },
    /// Sum of member disturbances.
    Sum { members: Vec<DisturbanceSpec> },
}

impl DisturbanceSpec {
    /// Checks finiteness and the structural constraints (nonnegative
    /// frequencies, nonempty composite variants).
    pub fn validate(&self) -> Result<(), Error> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "disturbance {what} must be finite, got {v}"
                )))
            }
        };
        match self {
            Self::Constant { level } => finite(*level, "level"),
            Self::Ramp { offset, slope } => {
                finite(*offset, "offset")?;
                finite(*slope, "slope")
            }
            Self::Poly { coefficients } => {
                if coefficients.is_empty() {
                    return Err(Error::InvalidParameter(
                        "polynomial disturbance needs at least one coefficient".into(),
                    ));
                }
                coefficients
                    .iter()
                    .try_for_each(|&c| finite(c, "coefficient"))
            }
            Self::SineSum { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidParameter(
                        "sinusoid sum needs at least one component".into(),
                    ));
                }
                for c in components {
                    finite(c.amplitude, "amplitude")?;
                    finite(c.frequency, "frequency")?;
                    finite(c.phase, "phase")?;
                    if c.frequency < 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "disturbance frequency must be nonnegative, got {}",
                            c.frequency
                        )));
                    }
                }
                Ok(())
            }
            Self::StateDependent {
                extra_viscous,
                coulomb,
                quadratic_drag,
            } => {
                finite(*extra_viscous, "extra_viscous")?;
                finite(*coulomb, "coulomb")?;
                finite(*quadratic_drag, "quadratic_drag")
            }
            Self::Sum { members } => {
                if members.is_empty() {
                    return Err(Error::InvalidParameter(
                        "disturbance sum needs at least one member".into(),
                    ));
                }
                members.iter().try_for_each(Self::validate)
            }
        }
    }
}

/// Sign with a zero value at rest, so Coulomb friction is deterministic at
/// `qdot = 0` (`f64::signum` maps ±0 to ±1).
fn sign_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates the disturbance torque at time `t` and state `x`.
pub fn eval_disturbance(spec: &DisturbanceSpec, t: f64, x: &State) -> f64 {
    match spec {
        DisturbanceSpec::Constant { level } => *level,
        DisturbanceSpec::Ramp { offset, slope } => offset + slope * t,
        DisturbanceSpec::Poly { coefficients } => {
            coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
        }
        DisturbanceSpec::SineSum { components } => components
            .iter()
            .map(|c| c.amplitude * (TAU * c.frequency * t + c.phase).sin())
            .sum(),
        DisturbanceSpec::StateDependent {
            extra_viscous,
            coulomb,
            quadratic_drag,
        } => {
            extra_viscous * x.qdot
                + coulomb * sign_or_zero(x.qdot)
                + quadratic_drag * x.qdot * x.qdot.abs()
        }
        DisturbanceSpec::Sum { members } => members.iter().map(|m| eval_disturbance(m, t, x)).sum(),
    }
}

/// Position reference for the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Step of `amplitude` rad at `start` seconds; zero before.
    Step { amplitude: f64, start: f64 },
    /// Sinusoid `amplitude·sin(2π·frequency·t)`.
    Sine { amplitude: f64, frequency: f64 },
    /// Constant reference.
    Hold { value: f64 },
}

impl ReferenceSpec {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = match self {
            Self::Step { amplitude, start } => amplitude.is_finite() && start.is_finite(),
            Self::Sine {
                amplitude,
                frequency,
            } => amplitude.is_finite() && frequency.is_finite() && *frequency >= 0.0,
            Self::Hold { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid reference specification: {self:?}"
            )))
        }
    }
}

/// Returns the reference position and its analytic time derivative. The step
/// derivative is zero everywhere, including at the jump.
pub fn eval_reference(spec: &ReferenceSpec, t: f64) -> (f64, f64) {
    match spec {
        ReferenceSpec::Step { amplitude, start } => {
            if t >= *start {
                (*amplitude, 0.0)
            } else {
                (0.0, 0.0)
            }
        }
        ReferenceSpec::Sine {
            amplitude,
            frequency,
        } => {
            let omega = TAU * frequency;
            (
                amplitude * (omega * t).sin(),
                amplitude * omega * (omega * t).cos(),
            )
        }
        ReferenceSpec::Hold { value } => (*value, 0.0),
    }
}
