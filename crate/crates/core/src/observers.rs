//! Discrete-time disturbance observers for the servo plant: the conventional
//! auxiliary-variable observer, the disturbance predictor, and the
//! high-performance observer that feeds a predicted disturbance variation
//! back into the recursion.
//!
//! All three share one recursion for the auxiliary variable
//! `z = τ_dn + Lᵀx`, chosen so that no state derivative is needed:
//!
//! ```text
//! ẑ' = (1 − LᵀD_d)·ẑ + Lᵀ(A_d + D_d Lᵀ − I)·x + LᵀB_d·u   [+ Δ̂τ_dn]
//! τ̂_dn = ẑ − Lᵀx          (extracted before the update)
//! ```
//!
//! The per-step error gain is `1 − LᵀD_d`; the estimate contracts when its
//! magnitude is below one.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::plant::{DiscreteModel, State};

/// Observer gain vector together with the scalar it was tuned from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGain {
    /// Gain vector mapping state to the torque scale of the auxiliary
    /// variable.
    pub l: Vector2<f64>,
    /// Free tuning parameter the vector was derived from, kept for reporting.
    pub g: f64,
}

impl ObserverGain {
    /// True when the error recursion contracts for the given disturbance
    /// input vector.
    pub fn is_stable(&self, d_d: &Vector2<f64>) -> bool {
        contraction_factor(self, d_d) < 1.0
    }
}

/// Tunes the gain vector as `L = (g / ‖D_d‖₁)·[1, 1]ᵀ`, which places the
/// error-recursion gain at `1 − g` when both components of `D_d` are
/// nonnegative.
pub fn tune_gain(g: f64, d_d: &Vector2<f64>) -> Result<ObserverGain, Error> {
    let norm1 = d_d[0].abs() + d_d[1].abs();
    if norm1 == 0.0 {
        return Err(Error::ZeroDisturbanceInput);
    }
    let scale = g / norm1;
    Ok(ObserverGain {
        l: Vector2::new(scale, scale),
        g,
    })
}

/// Per-step magnitude of the estimation-error recursion, `|1 − LᵀD_d|`.
/// Values below one contract; values at or above one do not.
pub fn contraction_factor(gain: &ObserverGain, d_d: &Vector2<f64>) -> f64 {
    (1.0 - gain.l.dot(d_d)).abs()
}

/// Shared auxiliary-variable update. Returns `ẑ` at the next sample.
fn aux_next(z_hat: f64, x: &State, u: f64, dm: &DiscreteModel, l: &Vector2<f64>) -> f64 {
    let xv = Vector2::new(x.q, x.qdot);
    let m = dm.a + dm.d * l.transpose() - Matrix2::identity();
    (1.0 - l.dot(&dm.d)) * z_hat + l.dot(&(m * xv)) + l.dot(&dm.b) * u
}

/// Disturbance estimate extracted from the current auxiliary variable and
/// sampled state.
fn extract(z_hat: f64, l: &Vector2<f64>, x: &State) -> f64 {
    z_hat - l.dot(&Vector2::new(x.q, x.qdot))
}

/// State of the conventional disturbance observer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CdobState {
    /// Estimated auxiliary variable (torque scale).
    pub z_hat: f64,
}

impl CdobState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current-step disturbance estimate, without advancing the observer.
    pub fn estimate(&self, gain: &ObserverGain, x: &State) -> f64 {
        extract(self.z_hat, &gain.l, x)
    }
}

/// One step of the conventional observer: returns the advanced state and the
/// estimate at the *current* sample (extracted before the update).
pub fn cdob_update(
    s: &CdobState,
    x: &State,
    u: f64,
    dm: &DiscreteModel,
    gain: &ObserverGain,
) -> (CdobState, f64) {
    let tau_hat = extract(s.z_hat, &gain.l, x);
    let next = CdobState {
        z_hat: aux_next(s.z_hat, x, u, dm, &gain.l),
    };
    (next, tau_hat)
}

/// Ring of the most recent predicted disturbance values, newest first.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceHistory {
    values: [f64; 3],
    filled: usize,
}

impl DisturbanceHistory {
    /// Number of valid entries, saturating at 3.
    pub fn filled(&self) -> usize {
        self.filled
    }

    /// Entry `i` steps in the past (0 = newest). Zero while unfilled.
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn push(&mut self, value: f64) {
        self.values[2] = self.values[1];
        self.values[1] = self.values[0];
        self.values[0] = value;
        self.filled = (self.filled + 1).min(3);
    }
}

/// State of the disturbance predictor: the same recursion as the
/// conventional observer plus a history ring of its extracted estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PredictorState {
    pub z_hat: f64,
    pub history: DisturbanceHistory,
}

impl PredictorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn estimate(&self, gain: &ObserverGain, x: &State) -> f64 {
        extract(self.z_hat, &gain.l, x)
    }
}

/// One step of the predictor. Identical recursion to [`cdob_update`]; the
/// extracted estimate is additionally pushed into the history ring.
pub fn predictor_update(
    s: &PredictorState,
    x: &State,
    u: f64,
    dm: &DiscreteModel,
    gain: &ObserverGain,
) -> (PredictorState, f64) {
    let tau_hat_p = extract(s.z_hat, &gain.l, x);
    let mut history = s.history;
    history.push(tau_hat_p);
    let next = PredictorState {
        z_hat: aux_next(s.z_hat, x, u, dm, &gain.l),
        history,
    };
    (next, tau_hat_p)
}

/// Backward-difference estimates of the first and second disturbance
/// derivatives from the predictor history. Missing history reports zero.
pub fn derivative_estimates(h: &DisturbanceHistory, ts: f64) -> (f64, f64) {
    let d1 = if h.filled() >= 2 {
        (h.get(0) - h.get(1)) / ts
    } else {
        0.0
    };
    let d2 = if h.filled() >= 3 {
        (h.get(0) - 2.0 * h.get(1) + h.get(2)) / (ts * ts)
    } else {
        0.0
    };
    (d1, d2)
}

/// Order of the disturbance-variation model fed to the high-performance
/// observer. Serializes as the integer 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DeltaOrder {
    First,
    Second,
}

impl DeltaOrder {
    /// History entries needed before the model has enough data.
    pub fn required_history(self) -> usize {
        match self {
            Self::First => 2,
            Self::Second => 3,
        }
    }
}

impl TryFrom<u8> for DeltaOrder {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            other => Err(format!("variation-model order must be 1 or 2, got {other}")),
        }
    }
}

impl From<DeltaOrder> for u8 {
    fn from(order: DeltaOrder) -> Self {
        match order {
            DeltaOrder::First => 1,
            DeltaOrder::Second => 2,
        }
    }
}

/// Coefficient set for the second-order variation model.
///
/// `Derived` uses `(3/2, −2, 1/2)`, the set that follows from combining the
/// backward-difference derivative estimates with a quadratic extrapolation
/// step; it vanishes on constant sequences. `PaperLiteral` uses
/// `(3/2, −2, 3/2)` as printed in the source material, which does not vanish
/// on constants; it is retained for auditability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffMode {
    #[default]
    Derived,
    PaperLiteral,
}

/// Predicted one-step variation of the disturbance from the predictor
/// history. Returns zero until the history holds `order + 1` entries.
pub fn delta_estimate(h: &DisturbanceHistory, order: DeltaOrder, mode: CoeffMode) -> f64 {
    if h.filled() < order.required_history() {
        return 0.0;
    }
    match order {
        DeltaOrder::First => h.get(0) - h.get(1),
        DeltaOrder::Second => {
            let last = match mode {
                CoeffMode::Derived => 0.5,
                CoeffMode::PaperLiteral => 1.5,
            };
            1.5 * h.get(0) - 2.0 * h.get(1) + last * h.get(2)
        }
    }
}

/// State of the high-performance observer. The variation model order and
/// coefficient mode ride along so a scenario can be reconstructed from the
/// state alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpdobState {
    pub z_hat: f64,
    pub order: DeltaOrder,
    pub coeff_mode: CoeffMode,
}

impl HpdobState {
    pub fn new(order: DeltaOrder, coeff_mode: CoeffMode) -> Self {
        Self {
            z_hat: 0.0,
            order,
            coeff_mode,
        }
    }

    pub fn estimate(&self, gain: &ObserverGain, x: &State) -> f64 {
        extract(self.z_hat, &gain.l, x)
    }
}

/// One step of the high-performance observer: the conventional recursion plus
/// the supplied disturbance-variation estimate. With `delta_hat = 0` the
/// step is identical to [`cdob_update`].
pub fn hpdob_update(
    s: &HpdobState,
    x: &State,
    u: f64,
    delta_hat: f64,
    dm: &DiscreteModel,
    gain: &ObserverGain,
) -> (HpdobState, f64) {
    let tau_hat = extract(s.z_hat, &gain.l, x);
    let next = HpdobState {
        z_hat: aux_next(s.z_hat, x, u, dm, &gain.l) + delta_hat,
        ..*s
    };
    (next, tau_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{build_continuous, discretize, step_discrete, ServoParams};
    use proptest::prelude::*;

    fn baseline_model(ts: f64) -> DiscreteModel {
        let cm = build_continuous(&ServoParams::new(0.125, 0.045).unwrap());
        discretize(&cm, ts).unwrap()
    }

    #[test]
    fn tune_gain_zero_and_nominal() {
        let d = Vector2::new(1.0, 3.0);
        let zero = tune_gain(0.0, &d).unwrap();
        assert_eq!(zero.l, Vector2::new(0.0, 0.0));
        assert!(tune_gain(0.5, &Vector2::zeros()).is_err());
    }

    #[test]
    fn tune_gain_on_servo_model() {
        let dm = baseline_model(1e-4);
        let gain = tune_gain(0.15, &dm.d).unwrap();
        // ‖D_d‖₁ ≈ 8.0e-4 so both entries land near 187.5.
        assert!((gain.l[0] - 187.5).abs() < 0.1);
        assert_eq!(gain.l[0], gain.l[1]);
        // Nonnegative components: L·D_d recovers g exactly up to rounding.
        assert!((gain.l.dot(&dm.d) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn contraction_factor_cases() {
        let dm = baseline_model(1e-4);
        let zero = ObserverGain {
            l: Vector2::zeros(),
            g: 0.0,
        };
        assert_eq!(contraction_factor(&zero, &dm.d), 1.0);
        assert!(!zero.is_stable(&dm.d));

        let g15 = tune_gain(0.15, &dm.d).unwrap();
        assert!((contraction_factor(&g15, &dm.d) - 0.85).abs() < 1e-12);
        assert!(g15.is_stable(&dm.d));

        let g21 = tune_gain(2.1, &dm.d).unwrap();
        assert!((contraction_factor(&g21, &dm.d) - 1.1).abs() < 1e-12);
        assert!(!g21.is_stable(&dm.d));
    }

    #[test]
    fn contraction_boundary_in_tuning_parameter() {
        let dm = baseline_model(1e-4);
        for g in [0.01, 0.5, 1.0, 1.5, 1.99] {
            assert!(tune_gain(g, &dm.d).unwrap().is_stable(&dm.d), "g={g}");
        }
        for g in [0.0, 2.0, 2.1, 3.0, -0.1] {
            assert!(!tune_gain(g, &dm.d).unwrap().is_stable(&dm.d), "g={g}");
        }
    }

    #[test]
    fn cdob_quiescent_stays_zero() {
        let dm = baseline_model(1e-4);
        let gain = tune_gain(0.3, &dm.d).unwrap();
        let (next, tau_hat) = cdob_update(&CdobState::new(), &State::default(), 0.0, &dm, &gain);
        assert_eq!(next.z_hat, 0.0);
        assert_eq!(tau_hat, 0.0);
    }

    /// Drives the discrete plant with a torque sequence and the observer in
    /// lockstep; returns the per-step estimation errors `τ_dn − τ̂`.
    fn run_cdob(
        dm: &DiscreteModel,
        gain: &ObserverGain,
        tau: impl Fn(usize) -> f64,
        u: impl Fn(usize) -> f64,
        z0: f64,
        steps: usize,
    ) -> Vec<f64> {
        let mut x = State::default();
        let mut s = CdobState { z_hat: z0 };
        let mut errors = Vec::with_capacity(steps);
        for k in 0..steps {
            let (next, tau_hat) = cdob_update(&s, &x, u(k), dm, gain);
            errors.push(tau(k) - tau_hat);
            x = step_discrete(dm, &x, u(k), tau(k));
            s = next;
        }
        errors
    }

    #[test]
    fn constant_disturbance_error_decays_geometrically() {
        let dm = baseline_model(1e-4);
        let gain = tune_gain(0.5, &dm.d).unwrap();
        let c = 5.0;
        let errors = run_cdob(&dm, &gain, |_| c, |_| 0.0, 0.0, 12);
        // e(0) = c with a cold-started observer; each step halves it.
        for (k, e) in errors.iter().enumerate() {
            let want = c * 0.5f64.powi(k as i32);
            assert!((e - want).abs() <= 1e-10 * want, "step {k}: {e} vs {want}");
        }
    }

    #[test]
    fn ramp_disturbance_settles_at_increment_over_gain() {
        let dm = baseline_model(1e-3);
        let g = 0.5;
        let gain = tune_gain(g, &dm.d).unwrap();
        let delta = 2.0 * dm.ts; // slope 2 N·m/s sampled at Ts
        let errors = run_cdob(&dm, &gain, |k| 2.0 * (k as f64 * dm.ts), |_| 0.0, 0.0, 200);
        let want = delta / g;
        let got = errors.last().unwrap();
        assert!((got - want).abs() / want < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn predictor_mirrors_conventional_observer() {
        let dm = baseline_model(1e-4);
        let gain = tune_gain(0.35, &dm.d).unwrap();
        let mut x = State::new(0.1, -0.2);
        let mut c = CdobState::new();
        let mut p = PredictorState::new();
        for k in 0..50 {
            let u = (k as f64 * 0.01).sin();
            let tau = 0.5 + 0.1 * k as f64;
            let (cn, c_hat) = cdob_update(&c, &x, u, &dm, &gain);
            let (pn, p_hat) = predictor_update(&p, &x, u, &dm, &gain);
            assert_eq!(c_hat.to_bits(), p_hat.to_bits());
            assert_eq!(cn.z_hat.to_bits(), pn.z_hat.to_bits());
            x = step_discrete(&dm, &x, u, tau);
            c = cn;
            p = pn;
        }
    }

    #[test]
    fn history_fills_monotonically() {
        let dm = baseline_model(1e-4);
        let gain = tune_gain(0.2, &dm.d).unwrap();
        let mut p = PredictorState::new();
        assert_eq!(p.history.filled(), 0);
        let x = State::new(0.0, 0.1);
        for want in 1..=4 {
            let (next, _) = predictor_update(&p, &x, 0.0, &dm, &gain);
            p = next;
            assert_eq!(p.history.filled(), want.min(3));
        }
    }

    #[test]
    fn history_converges_for_constant_disturbance() {
        let dm = baseline_model(1e-4);
        let gain = tune_gain(0.5, &dm.d).unwrap();
        let mut x = State::default();
        let mut p = PredictorState::new();
        for _ in 0..200 {
            let (next, _) = predictor_update(&p, &x, 0.0, &dm, &gain);
            x = step_discrete(&dm, &x, 0.0, 3.0);
            p = next;
        }
        let h = p.history;
        assert!((h.get(0) - h.get(1)).abs() < 1e-9);
        assert!((h.get(1) - h.get(2)).abs() < 1e-9);
        assert!((h.get(0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn derivative_estimates_on_known_sequences() {
        let mut h = DisturbanceHistory::default();
        for v in [7.0, 7.0, 7.0] {
            h.push(v);
        }
        assert_eq!(derivative_estimates(&h, 1.0), (0.0, 0.0));

        let mut h = DisturbanceHistory::default();
        for v in [0.0, 3.0, 6.0] {
            h.push(v); // newest ends at 6: affine sequence 2δ, δ, 0 with δ=3
        }
        assert_eq!(derivative_estimates(&h, 1.0), (3.0, 0.0));

        let mut h = DisturbanceHistory::default();
        for v in [0.0, 1.0, 4.0] {
            h.push(v); // quadratic k²
        }
        assert_eq!(derivative_estimates(&h, 1.0), (3.0, 2.0));
    }

    #[test]
    fn derivative_estimates_warm_up_reports_zero() {
        let mut h = DisturbanceHistory::default();
        assert_eq!(derivative_estimates(&h, 0.5), (0.0, 0.0));
        h.push(4.0);
        assert_eq!(derivative_estimates(&h, 0.5), (0.0, 0.0));
        h.push(5.0);
        let (d1, d2) = derivative_estimates(&h, 0.5);
        assert_eq!(d1, 2.0);
        assert_eq!(d2, 0.0);
    }

    #[test]
    fn delta_estimate_coefficient_audit() {
        let mut h = DisturbanceHistory::default();
        for _ in 0..3 {
            h.push(2.0);
        }
        assert_eq!(
            delta_estimate(&h, DeltaOrder::First, CoeffMode::Derived),
            0.0
        );
        assert_eq!(
            delta_estimate(&h, DeltaOrder::Second, CoeffMode::Derived),
            0.0
        );
        // The printed coefficient set leaves the constant itself behind.
        assert_eq!(
            delta_estimate(&h, DeltaOrder::Second, CoeffMode::PaperLiteral),
            2.0
        );
    }

    #[test]
    fn delta_estimate_affine_and_quadratic() {
        let mut h = DisturbanceHistory::default();
        for v in [0.0, 3.0, 6.0] {
            h.push(v);
        }
        assert_eq!(
            delta_estimate(&h, DeltaOrder::First, CoeffMode::Derived),
            3.0
        );
        assert_eq!(
            delta_estimate(&h, DeltaOrder::Second, CoeffMode::Derived),
            3.0
        );

        let mut h = DisturbanceHistory::default();
        for v in [0.0, 1.0, 4.0] {
            h.push(v);
        }
        // True next increment is 5; the quadratic model recovers 4, short by
        // half the second difference.
        assert_eq!(
            delta_estimate(&h, DeltaOrder::Second, CoeffMode::Derived),
            4.0
        );
    }

    #[test]
    fn delta_estimate_warm_up_is_zero() {
        let mut h = DisturbanceHistory::default();
        h.push(9.0);
        assert_eq!(
            delta_estimate(&h, DeltaOrder::First, CoeffMode::Derived),
            0.0
        );
        h.push(11.0);
        assert_eq!(
            delta_estimate(&h, DeltaOrder::Second, CoeffMode::Derived),
            0.0
        );
    }

    #[test]
    fn hpdob_with_zero_delta_reduces_to_cdob() {
        let dm = baseline_model(1e-4);
        let gain = tune_gain(0.25, &dm.d).unwrap();
        let mut x = State::new(-0.3, 0.8);
        let mut c = CdobState::new();
        let mut o = HpdobState::new(DeltaOrder::First, CoeffMode::Derived);
        for k in 0..100 {
            let u = 0.7 * (k as f64 * 0.02).cos();
            let tau = (k as f64 * 0.05).sin();
            let (cn, c_hat) = cdob_update(&c, &x, u, &dm, &gain);
            let (on, o_hat) = hpdob_update(&o, &x, u, 0.0, &dm, &gain);
            assert!((c_hat - o_hat).abs() <= 1e-15);
            assert!((cn.z_hat - on.z_hat).abs() <= 1e-15);
            x = step_discrete(&dm, &x, u, tau);
            c = cn;
            o = on;
        }
    }

    #[test]
    fn hpdob_exact_variation_gives_geometric_decay() {
        // Injecting the true per-step variation makes the error contract at
        // exactly the recursion gain, whatever the disturbance shape.
        let dm = baseline_model(1e-3);
        let g = 0.15;
        let gain = tune_gain(g, &dm.d).unwrap();
        let tau = |k: usize| {
            let t = k as f64 * dm.ts;
            3.0 * (2.0 * std::f64::consts::PI * t + 0.3).sin() + 0.4 * t
        };
        let mut x = State::default();
        let mut o = HpdobState::new(DeltaOrder::First, CoeffMode::Derived);
        o.z_hat = -100.0; // large initial estimation error
        let rho = 1.0 - g;
        let mut e0 = 0.0;
        for k in 0..60 {
            let delta = tau(k + 1) - tau(k);
            let (on, tau_hat) = hpdob_update(&o, &x, 0.0, delta, &dm, &gain);
            let e = tau(k) - tau_hat;
            if k == 0 {
                e0 = e;
            } else {
                let want = e0 * rho.powi(k as i32);
                assert!(
                    (e - want).abs() <= 1e-9 * want.abs(),
                    "step {k}: {e} vs {want}"
                );
            }
            x = step_discrete(&dm, &x, 0.0, tau(k));
            o = on;
        }
    }

    #[test]
    fn hpdob_annihilates_ramp_disturbance() {
        let dm = baseline_model(1e-3);
        let gain = tune_gain(0.5, &dm.d).unwrap();
        let tau = |k: usize| 2.0 * (k as f64 * dm.ts);
        let mut x = State::default();
        let mut p = PredictorState::new();
        let mut o = HpdobState::new(DeltaOrder::First, CoeffMode::Derived);
        let mut last = f64::INFINITY;
        for k in 0..2000 {
            let (pn, _) = predictor_update(&p, &x, 0.0, &dm, &gain);
            let delta = delta_estimate(&pn.history, o.order, o.coeff_mode);
            let (on, tau_hat) = hpdob_update(&o, &x, 0.0, delta, &dm, &gain);
            last = tau(k) - tau_hat;
            x = step_discrete(&dm, &x, 0.0, tau(k));
            p = pn;
            o = on;
        }
        assert!(last.abs() < 1e-9, "steady-state error {last}");
    }

    #[test]
    fn second_order_outperforms_first_on_quadratic_disturbance() {
        let dm = baseline_model(1e-3);
        let gain = tune_gain(0.5, &dm.d).unwrap();
        let tau = |k: usize| {
            let t = k as f64 * dm.ts;
            4.0 * t * t
        };
        let steady_error = |order: DeltaOrder| {
            let mut x = State::default();
            let mut p = PredictorState::new();
            let mut o = HpdobState::new(order, CoeffMode::Derived);
            let mut last = 0.0;
            for k in 0..3000 {
                let (pn, _) = predictor_update(&p, &x, 0.0, &dm, &gain);
                let delta = delta_estimate(&pn.history, o.order, o.coeff_mode);
                let (on, tau_hat) = hpdob_update(&o, &x, 0.0, delta, &dm, &gain);
                last = tau(k) - tau_hat;
                x = step_discrete(&dm, &x, 0.0, tau(k));
                p = pn;
                o = on;
            }
            last.abs()
        };
        let e1 = steady_error(DeltaOrder::First);
        let e2 = steady_error(DeltaOrder::Second);
        assert!(e1 > 0.0);
        assert!(e2 < e1, "second order {e2} vs first order {e1}");
    }

    #[test]
    fn hpdob_warm_up_matches_cdob_steps() {
        let dm = baseline_model(1e-3);
        let gain = tune_gain(0.3, &dm.d).unwrap();
        for (order, warm) in [(DeltaOrder::First, 1usize), (DeltaOrder::Second, 2usize)] {
            let mut x = State::new(0.2, -0.1);
            let mut c = CdobState::new();
            let mut p = PredictorState::new();
            let mut o = HpdobState::new(order, CoeffMode::Derived);
            for k in 0..warm + 3 {
                let u = 0.4;
                let tau = 1.0 + k as f64;
                let (pn, _) = predictor_update(&p, &x, u, &dm, &gain);
                let delta = delta_estimate(&pn.history, o.order, o.coeff_mode);
                let (cn, c_hat) = cdob_update(&c, &x, u, &dm, &gain);
                let (on, o_hat) = hpdob_update(&o, &x, u, delta, &dm, &gain);
                if k < warm {
                    assert_eq!(delta, 0.0, "order {order:?} step {k}");
                    assert_eq!(c_hat.to_bits(), o_hat.to_bits());
                    assert_eq!(cn.z_hat.to_bits(), on.z_hat.to_bits());
                }
                x = step_discrete(&dm, &x, u, tau);
                c = cn;
                p = pn;
                o = on;
            }
        }
    }

    proptest! {
        /// The measured auxiliary error obeys its one-step recursion against
        /// an arbitrary injected torque sequence. A PD loop keeps the state
        /// small so the check stays far above the rounding floor.
        #[test]
        fn error_recursion_holds_per_step(
            g in 0.05f64..1.95,
            amp in 0.1f64..5.0,
            freq in 0.1f64..20.0,
            z0 in -3.0f64..3.0,
        ) {
            let dm = baseline_model(1e-3);
            let gain = tune_gain(g, &dm.d).unwrap();
            let rho = 1.0 - gain.l.dot(&dm.d);
            let tau = |k: usize| amp * (freq * k as f64 * dm.ts).sin();
            let mut x = State::default();
            let mut s = CdobState { z_hat: z0 };
            let mut prev_err: Option<f64> = None;
            for k in 0..300 {
                let u = 100.0 * -x.q + 10.0 * -x.qdot;
                let (next, tau_hat) = cdob_update(&s, &x, u, &dm, &gain);
                let e = tau(k) - tau_hat;
                if let Some(ep) = prev_err {
                    let want = rho * ep + (tau(k) - tau(k - 1));
                    prop_assert!((e - want).abs() < 1e-12, "step {}: {} vs {}", k, e, want);
                }
                prev_err = Some(e);
                x = step_discrete(&dm, &x, u, tau(k));
                s = next;
            }
        }

        /// Same recursion for the high-performance observer, with whatever
        /// variation estimate was actually supplied.
        #[test]
        fn hpdob_error_recursion_holds_per_step(
            g in 0.05f64..1.95,
            amp in 0.1f64..5.0,
            freq in 0.1f64..20.0,
            delta_scale in -1.0f64..1.0,
        ) {
            let dm = baseline_model(1e-3);
            let gain = tune_gain(g, &dm.d).unwrap();
            let rho = 1.0 - gain.l.dot(&dm.d);
            let tau = |k: usize| amp * (freq * k as f64 * dm.ts).sin();
            let delta_hat = |k: usize| delta_scale * (0.37 * k as f64).cos();
            let mut x = State::default();
            let mut o = HpdobState::new(DeltaOrder::First, CoeffMode::Derived);
            let mut prev: Option<(f64, f64)> = None;
            for k in 0..300 {
                let u = 100.0 * -x.q + 10.0 * -x.qdot;
                let (on, tau_hat) = hpdob_update(&o, &x, u, delta_hat(k), &dm, &gain);
                let e = tau(k) - tau_hat;
                if let Some((ep, dp)) = prev {
                    let want = rho * ep + (tau(k) - tau(k - 1)) - dp;
                    prop_assert!((e - want).abs() < 1e-12, "step {}: {} vs {}", k, e, want);
                }
                prev = Some((e, delta_hat(k)));
                x = step_discrete(&dm, &x, u, tau(k));
                o = on;
            }
        }
    }
}
