//! Outer-loop PD controller and the composition with the inner-loop
//! disturbance compensation.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::observers::{CoeffMode, DeltaOrder};
use crate::plant::State;

/// Proportional/derivative gains of the position loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    /// N·m/rad.
    pub kp: f64,
    /// N·m·s/rad.
    pub kd: f64,
}

impl PdGains {
    pub fn new(kp: f64, kd: f64) -> Result<Self, Error> {
        if !(kp.is_finite() && kd.is_finite() && kp >= 0.0 && kd >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "PD gains must be finite and nonnegative, got kp={kp}, kd={kd}"
            )));
        }
        Ok(Self { kp, kd })
    }
}

/// Inner-loop configuration of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControllerMode {
    /// PD only; no disturbance feedback.
    PdOnly {},
    /// PD plus the conventional disturbance observer tuned from `g`.
    PdPlusCdob { g: f64 },
    /// PD plus the high-performance observer: predictor gain `g_p`,
    /// observer gain `g_o`, and the variation-model order and coefficients.
    PdPlusHpdob {
        order: DeltaOrder,
        g_p: f64,
        g_o: f64,
        #[serde(default)]
        coeff_mode: CoeffMode,
    },
}

impl ControllerMode {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            Self::PdOnly {} => Ok(()),
            Self::PdPlusCdob { g } => {
                if g.is_finite() && *g > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "observer gain must be finite and positive, got g={g}"
                    )))
                }
            }
            Self::PdPlusHpdob { g_p, g_o, .. } => {
                if g_p.is_finite() && *g_p > 0.0 && g_o.is_finite() && *g_o > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "observer gains must be finite and positive, got g_p={g_p}, g_o={g_o}"
                    )))
                }
            }
        }
    }
}

/// PD law on the sampled state: `Kp·(q_ref − q) + Kd·(q̇_ref − q̇)`.
pub fn pd_control(reference: (f64, f64), x: &State, gains: &PdGains) -> f64 {
    let (q_ref, qdot_ref) = reference;
    gains.kp * (q_ref - x.q) + gains.kd * (qdot_ref - x.qdot)
}

/// Adds the disturbance estimate to the PD torque. The disturbance enters the
/// plant with a minus sign and shares the input vector, so additive feedback
/// cancels it.
pub fn compose_control(u_pd: f64, tau_hat: f64) -> f64 {
    u_pd + tau_hat
}
