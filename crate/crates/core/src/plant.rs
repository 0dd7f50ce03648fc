//! Second-order servo plant: continuous model, exact zero-order-hold
//! discretization, the lumped nominal disturbance variable, and ground-truth
//! integration of the uncertain plant.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Inertia and friction of one servo axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoParams {
    /// Rotor inertia (kg·m²), strictly positive.
    pub inertia: f64,
    /// Viscous friction coefficient (N·m·s/rad), nonnegative.
    pub viscous: f64,
    /// Sign of the viscous term in the velocity row of the state matrix:
    /// -1 gives a dissipative (stable) open-loop plant, +1 the opposite
    /// convention. Defaults to -1.
    pub damping_sign: i8,
}

impl ServoParams {
    /// Dissipative-friction parameters (`damping_sign = -1`).
    pub fn new(inertia: f64, viscous: f64) -> Result<Self, Error> {
        Self::with_damping_sign(inertia, viscous, -1)
    }

    pub fn with_damping_sign(inertia: f64, viscous: f64, damping_sign: i8) -> Result<Self, Error> {
        if !inertia.is_finite() || inertia <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "inertia must be finite and positive, got {inertia}"
            )));
        }
        if !viscous.is_finite() || viscous < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "viscous friction must be finite and nonnegative, got {viscous}"
            )));
        }
        if damping_sign != -1 && damping_sign != 1 {
            return Err(Error::InvalidParameter(format!(
                "damping sign must be -1 or +1, got {damping_sign}"
            )));
        }
        Ok(Self {
            inertia,
            viscous,
            damping_sign,
        })
    }
}

/// Continuous-time state-space model `ẋ = A x + B u − D τ_d` with
/// `x = [q, q̇]ᵀ`. Only the velocity row carries torque input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousModel {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    /// Disturbance input vector; equals `b` for this plant family.
    pub d: Vector2<f64>,
}

/// Zero-order-hold discretization `x' = A_d x + B_d u − D_d τ_dn` at period `ts`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteModel {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub d: Vector2<f64>,
    /// Sampling period (s).
    pub ts: f64,
}

/// Position/velocity state of the servo axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct State {
    /// Position (rad).
    pub q: f64,
    /// Velocity (rad/s).
    pub qdot: f64,
}

impl State {
    pub fn new(q: f64, qdot: f64) -> Self {
        Self { q, qdot }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.qdot.is_finite()
    }
}

/// The uncertain plant that is simulated and the nominal plant the observers
/// are synthesized from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantPair {
    pub true_params: ServoParams,
    pub nominal_params: ServoParams,
}

impl PlantPair {
    pub fn new(true_params: ServoParams, nominal_params: ServoParams) -> Self {
        Self {
            true_params,
            nominal_params,
        }
    }

    /// Nominal model identical to the true one (no parameter mismatch).
    pub fn matched(params: ServoParams) -> Self {
        Self {
            true_params: params,
            nominal_params: params,
        }
    }
}

/// Builds the continuous state-space matrices from the servo parameters.
pub fn build_continuous(params: &ServoParams) -> ContinuousModel {
    let damping = f64::from(params.damping_sign) * params.viscous / params.inertia;
    let inv_inertia = 1.0 / params.inertia;
    ContinuousModel {
        a: Matrix2::new(0.0, 1.0, 0.0, damping),
        b: Vector2::new(0.0, inv_inertia),
        d: Vector2::new(0.0, inv_inertia),
    }
}

/// Below this value of `|a·Ts|` the closed-form kernels are evaluated by
/// truncated series; the direct expressions are 0/0 at `a = 0` and lose
/// precision to cancellation near it.
const SMALL_DECAY_PRODUCT: f64 = 1e-6;

/// Exact zero-order-hold discretization of the servo model.
///
/// With `a = -A[1][1]`, the state transition is
/// `A_d = [[1, (1−e^{−aTs})/a], [0, e^{−aTs}]]`, and the held-input vectors
/// are the corresponding integrals of `e^{Aτ}B` over one period.
pub fn discretize(cm: &ContinuousModel, ts: f64) -> Result<DiscreteModel, Error> {
    if !ts.is_finite() || ts <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sampling period must be finite and positive, got {ts}"
        )));
    }
    let decay = -cm.a[(1, 1)];
    let x = decay * ts;
    // decay_int  = ∫₀^Ts e^{−aτ} dτ = (1 − e^{−aTs})/a
    // decay_int2 = ∫₀^Ts (1 − e^{−aτ})/a dτ = (Ts − decay_int)/a
    //
    // Both are evaluated through exp_m1 so no precision is lost to
    // cancellation just above the series threshold.
    let (decay_int, decay_int2) = if x.abs() > SMALL_DECAY_PRODUCT {
        let em1 = (-x).exp_m1();
        (-em1 / decay, (x + em1) / (decay * decay))
    } else {
        (
            ts * (1.0 - x / 2.0 + x * x / 6.0),
            ts * ts * (0.5 - x / 6.0 + x * x / 24.0),
        )
    };
    let a = Matrix2::new(1.0, decay_int, 0.0, (-x).exp());
    let b = Vector2::new(decay_int2 * cm.b[1], decay_int * cm.b[1]);
    let d = Vector2::new(decay_int2 * cm.d[1], decay_int * cm.d[1]);
    Ok(DiscreteModel { a, b, d, ts })
}

/// Upper bound on series terms; the scaled argument has norm ≤ 1/2 so the
/// tail shrinks at least geometrically and 64 terms is far more than enough.
const MAX_EXP_TERMS: usize = 64;

/// Matrix exponential `e^{At}` of a 2×2 matrix by scaling-and-squaring of a
/// truncated Taylor series. Independent of [`discretize`]; serves as the
/// reference computation in validation.
///
/// Terms are accumulated until the latest term's norm drops below `tol`.
pub fn matrix_exp_series(a: &Matrix2<f64>, t: f64, tol: f64) -> Matrix2<f64> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut scaled = a * t;
    let mut squarings = 0u32;
    while scaled.norm() > 0.5 {
        scaled /= 2.0;
        squarings += 1;
    }
    let mut sum = Matrix2::identity();
    let mut term = Matrix2::identity();
    for k in 1..=MAX_EXP_TERMS {
        term = term * scaled / k as f64;
        sum += term;
        if term.norm() < tol {
            break;
        }
    }
    for _ in 0..squarings {
        sum *= sum;
    }
    sum
}

/// The scalar disturbance that makes the nominal model reproduce the true
/// model's state derivative for the given state, input, and external torque.
///
/// Only the velocity row of the models is nontrivial, so the rank-1
/// projection reduces to scaling that row's residual back to torque units.
pub fn nominal_disturbance(
    x: &State,
    u: f64,
    tau_d: f64,
    cm_true: &ContinuousModel,
    cm_nom: &ContinuousModel,
) -> f64 {
    let nominal_inertia = 1.0 / cm_nom.d[1];
    let residual = (cm_nom.a[(1, 1)] - cm_true.a[(1, 1)]) * x.qdot
        + (cm_nom.b[1] - cm_true.b[1]) * u
        + cm_true.d[1] * tau_d;
    nominal_inertia * residual
}

/// Series tolerance for the matrix exponentials evaluated at quadrature nodes.
const QUAD_EXP_TOL: f64 = 1e-14;

/// Default panel count for [`exact_disturbance_input`]. Plenty for smooth
/// torques over one sampling period; validation sweeps use more for extra
/// headroom.
pub const DEFAULT_QUAD_PANELS: usize = 64;

/// Exact held-disturbance input over one sampling period,
/// `∫₀^Ts e^{Aτ} D τ_dn((k+1)Ts − τ) dτ`, by composite Simpson quadrature
/// with `quad_points` panels. Validation oracle for quantifying the error of
/// the constant-disturbance product `D_d · τ_dn(kTs)`.
pub fn exact_disturbance_input<F>(
    dist: F,
    cm_nom: &ContinuousModel,
    k: usize,
    ts: f64,
    quad_points: usize,
) -> Vector2<f64>
where
    F: Fn(f64) -> f64,
{
    assert!(quad_points >= 2, "need at least two quadrature panels");
    let t_next = (k as f64 + 1.0) * ts;
    let integrand = |tau: f64| -> Vector2<f64> {
        matrix_exp_series(&cm_nom.a, tau, QUAD_EXP_TOL) * cm_nom.d * dist(t_next - tau)
    };
    let h = ts / quad_points as f64;
    let mut acc = Vector2::zeros();
    for i in 0..quad_points {
        let left = i as f64 * h;
        acc += integrand(left) + 4.0 * integrand(left + 0.5 * h) + integrand(left + h);
    }
    acc * (h / 6.0)
}

/// One step of the discrete model: `x' = A_d x + B_d u − D_d τ_dn`.
pub fn step_discrete(dm: &DiscreteModel, x: &State, u: f64, tau_dn: f64) -> State {
    let xv = Vector2::new(x.q, x.qdot);
    let next = dm.a * xv + dm.b * u - dm.d * tau_dn;
    State {
        q: next[0],
        qdot: next[1],
    }
}

/// Ground-truth advance of the uncertain continuous plant over one control
/// period: classical fourth-order fixed-step integration with `substeps`
/// stages, the control input held constant, and the disturbance evaluated
/// continuously in time and state.
pub fn step_truth<F>(
    params: &ServoParams,
    x: &State,
    u_zoh: f64,
    dist: F,
    t0: f64,
    ts: f64,
    substeps: usize,
) -> State
where
    F: Fn(f64, &State) -> f64,
{
    assert!(substeps >= 1, "need at least one integration substep");
    let damping = f64::from(params.damping_sign) * params.viscous / params.inertia;
    let inv_inertia = 1.0 / params.inertia;
    let accel = |t: f64, s: &State| damping * s.qdot + inv_inertia * (u_zoh - dist(t, s));

    let dt = ts / substeps as f64;
    let half = 0.5 * dt;
    let mut s = *x;
    for i in 0..substeps {
        let t = t0 + i as f64 * dt;
        let k1q = s.qdot;
        let k1v = accel(t, &s);
        let s2 = State::new(s.q + half * k1q, s.qdot + half * k1v);
        let k2q = s2.qdot;
        let k2v = accel(t + half, &s2);
        let s3 = State::new(s.q + half * k2q, s.qdot + half * k2v);
        let k3q = s3.qdot;
        let k3v = accel(t + half, &s3);
        let s4 = State::new(s.q + dt * k3q, s.qdot + dt * k3v);
        let k4q = s4.qdot;
        let k4v = accel(t + dt, &s4);
        s.q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        s.qdot += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    s
}
