//! Self-check suite: cross-validates the closed-form discretization against
//! the series/quadrature references and confirms the observer error
//! recursions on exactly-discrete simulations. Backs the `validate` CLI
//! subcommand and the release gate.

use nalgebra::Vector2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::control::ControllerMode;
use crate::observers::{
    delta_estimate, hpdob_update, tune_gain, CoeffMode, DeltaOrder, DisturbanceHistory, HpdobState,
};
use crate::plant::{
    build_continuous, discretize, exact_disturbance_input, matrix_exp_series, nominal_disturbance,
    step_discrete, step_truth, ServoParams, State, DEFAULT_QUAD_PANELS,
};
use crate::signals::{DisturbanceSpec, ReferenceSpec};
use crate::sim::{run_scenario, PlantModel, ScenarioConfig};

/// Outcome of one check. A check passes when `residual <= threshold`;
/// informational checks report a measured value without gating the suite.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    /// Measured residual (meaning depends on the check; documented per name).
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
    pub informational: bool,
}

impl CheckReport {
    fn gated(name: &'static str, residual: f64, threshold: f64) -> Self {
        Self {
            name,
            residual,
            threshold,
            passed: residual <= threshold,
            informational: false,
        }
    }

    fn informational(name: &'static str, residual: f64, threshold: f64) -> Self {
        Self {
            name,
            residual,
            threshold,
            passed: true,
            informational: true,
        }
    }
}

/// Options for the check suite. `perturb_a_d` injects an artificial offset
/// into the closed-form transition matrix before comparison, for verifying
/// that the discretization check actually detects defects.
#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub draws: usize,
    pub seed: u64,
    pub perturb_a_d: Option<f64>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            draws: 100,
            seed: 20260810,
            perturb_a_d: None,
        }
    }
}

/// Runs every check and returns the reports in a fixed order.
pub fn run_checks(opts: &ValidateOptions) -> Vec<CheckReport> {
    vec![
        discretization_check(opts),
        determinant_check(opts),
        derivative_matching_check(opts),
        conventional_recursion_check(),
        high_performance_recursion_check(),
        held_disturbance_constant_check(),
        quadrature_convergence_check(),
        truth_integrator_order_check(),
        derived_coefficients_vanish_check(),
        printed_coefficients_residual_check(),
    ]
}

/// True when every gated check passed.
pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

fn sample_params(rng: &mut ChaCha8Rng) -> (ServoParams, f64) {
    let j = rng.random_range(0.01..10.0);
    let b = rng.random_range(0.0..1.0);
    let ts = 10f64.powf(rng.random_range(-5.0..-2.0));
    (ServoParams::new(j, b).unwrap(), ts)
}

/// Max normwise relative deviation of the closed-form discretization from
/// the matrix-exponential series and the held-input quadrature.
fn discretization_check(opts: &ValidateOptions) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    for _ in 0..opts.draws {
        let (params, ts) = sample_params(&mut rng);
        let cm = build_continuous(&params);
        let mut dm = discretize(&cm, ts).unwrap();
        if let Some(eps) = opts.perturb_a_d {
            dm.a[(0, 1)] += eps;
        }
        let a_ref = matrix_exp_series(&cm.a, ts, 1e-15);
        let d_ref = exact_disturbance_input(|_| 1.0, &cm, 0, ts, 256);
        let err_a = (dm.a - a_ref).norm() / a_ref.norm();
        let err_b = (dm.b - d_ref).norm() / d_ref.norm();
        let err_d = (dm.d - d_ref).norm() / d_ref.norm();
        worst = worst.max(err_a).max(err_b).max(err_d);
    }
    CheckReport::gated(
        "discretization vs series/quadrature references",
        worst,
        1e-10,
    )
}

/// Max relative deviation of det(A_d) from exp(trace(A_c)·Ts).
fn determinant_check(opts: &ValidateOptions) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut worst = 0.0f64;
    for _ in 0..opts.draws {
        let (params, ts) = sample_params(&mut rng);
        let cm = build_continuous(&params);
        let dm = discretize(&cm, ts).unwrap();
        let det = dm.a[(0, 0)] * dm.a[(1, 1)] - dm.a[(0, 1)] * dm.a[(1, 0)];
        let want = (cm.a[(1, 1)] * ts).exp();
        worst = worst.max((det - want).abs() / want.abs());
    }
    CheckReport::gated("transition-matrix determinant identity", worst, 1e-12)
}

/// Max absolute gap between the true state derivative and the nominal model
/// driven by the lumped disturbance, over random states and mismatches.
fn derivative_matching_check(opts: &ValidateOptions) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(2));
    let mut worst = 0.0f64;
    for _ in 0..opts.draws {
        let cm_true = build_continuous(
            &ServoParams::new(rng.random_range(0.05..2.0), rng.random_range(0.0..0.5)).unwrap(),
        );
        let cm_nom = build_continuous(
            &ServoParams::new(rng.random_range(0.05..2.0), rng.random_range(0.0..0.5)).unwrap(),
        );
        let x = State::new(rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0));
        let u = rng.random_range(-10.0..10.0);
        let tau_d = rng.random_range(-10.0..10.0);
        let tau_dn = nominal_disturbance(&x, u, tau_d, &cm_true, &cm_nom);
        let xv = Vector2::new(x.q, x.qdot);
        let true_deriv = cm_true.a * xv + cm_true.b * u - cm_true.d * tau_d;
        let nom_deriv = cm_nom.a * xv + cm_nom.b * u - cm_nom.d * tau_dn;
        worst = worst.max((true_deriv - nom_deriv).norm());
    }
    CheckReport::gated("lumped-disturbance derivative matching", worst, 1e-12)
}

/// Shapes used by the recursion checks; amplitudes stay small so the
/// per-step floating-point headroom dominates the 1e-12 bound.
fn recursion_shapes() -> Vec<DisturbanceSpec> {
    vec![
        DisturbanceSpec::Constant { level: 2.0 },
        DisturbanceSpec::Ramp {
            offset: 0.5,
            slope: 1.0,
        },
        DisturbanceSpec::SineSum {
            components: vec![crate::signals::SineComponent {
                amplitude: 2.0,
                frequency: 1.0,
                phase: 0.0,
            }],
        },
    ]
}

fn recursion_scenario(g: f64, disturbance: DisturbanceSpec) -> ScenarioConfig {
    ScenarioConfig {
        ts: 1e-3,
        duration: 1.0,
        mode: ControllerMode::PdPlusCdob { g },
        disturbance,
        reference: ReferenceSpec::Hold { value: 0.0 },
        plant_model: PlantModel::PureDiscrete,
        ..ScenarioConfig::default()
    }
}

/// Max per-step residual of the conventional observer's error recursion on
/// exactly-discrete closed-loop runs across gains and disturbance shapes.
fn conventional_recursion_check() -> CheckReport {
    let mut worst = 0.0f64;
    for g in [0.15, 0.35, 1.0, 1.9] {
        for shape in recursion_shapes() {
            let trace = run_scenario(&recursion_scenario(g, shape)).unwrap();
            let rho = 1.0 - g;
            for k in 0..trace.len() - 1 {
                let want = rho * trace.est_error[k] + (trace.tau_dn[k + 1] - trace.tau_dn[k]);
                worst = worst.max((trace.est_error[k + 1] - want).abs());
            }
        }
    }
    CheckReport::gated("conventional observer error recursion", worst, 1e-12)
}

/// Same recursion for the high-performance observer, against the variation
/// estimates actually supplied each step.
fn high_performance_recursion_check() -> CheckReport {
    let cm = build_continuous(&ServoParams::new(0.125, 0.045).unwrap());
    let dm = discretize(&cm, 1e-3).unwrap();
    let g = 0.35;
    let gain = tune_gain(g, &dm.d).unwrap();
    let rho = 1.0 - gain.l.dot(&dm.d);
    let tau = |k: usize| {
        let t = k as f64 * dm.ts;
        2.0 * (6.0 * t).sin() + 0.5 * t
    };
    // Arbitrary bounded variation estimates, including a deliberately wrong
    // scale: the recursion must hold for whatever is injected.
    let delta_hat = |k: usize| 0.3 * (0.17 * k as f64).cos();

    let mut x = State::default();
    let mut o = HpdobState::new(DeltaOrder::First, CoeffMode::Derived);
    let mut worst = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..1000 {
        let (next, tau_hat) = hpdob_update(&o, &x, 0.0, delta_hat(k), &dm, &gain);
        let e = tau(k) - tau_hat;
        if let Some((e_prev, d_prev)) = prev {
            let want = rho * e_prev + (tau(k) - tau(k - 1)) - d_prev;
            worst = worst.max((e - want).abs());
        }
        prev = Some((e, delta_hat(k)));
        x = step_discrete(&dm, &x, 0.0, tau(k));
        o = next;
    }
    CheckReport::gated("high-performance observer error recursion", worst, 1e-12)
}

/// Relative gap between the held-disturbance integral for a constant torque
/// and the discrete disturbance vector times that torque.
fn held_disturbance_constant_check() -> CheckReport {
    let cm = build_continuous(&ServoParams::new(0.125, 0.045).unwrap());
    let ts = 1e-3;
    let dm = discretize(&cm, ts).unwrap();
    let c = 2.5;
    let pi = exact_disturbance_input(|_| c, &cm, 4, ts, DEFAULT_QUAD_PANELS);
    let want = dm.d * c;
    let residual = (pi - want).norm() / want.norm();
    CheckReport::gated(
        "held-disturbance integral, constant torque",
        residual,
        1e-10,
    )
}

/// Error ratio when the quadrature panel count doubles; a fourth-order rule
/// should cut the error by ~16x, so the ratio must be at most 1/4.
fn quadrature_convergence_check() -> CheckReport {
    let cm = build_continuous(&ServoParams::new(0.1, 1.0).unwrap());
    let ts = 5e-2;
    let tau = |t: f64| (40.0 * t).sin() + 0.5 * (90.0 * t).cos();
    let reference = exact_disturbance_input(tau, &cm, 3, ts, 4096);
    let err = |panels: usize| {
        (exact_disturbance_input(tau, &cm, 3, ts, panels) - reference).norm() / reference.norm()
    };
    let coarse = err(8);
    let fine = err(16);
    let ratio = if coarse > 1e-14 { fine / coarse } else { 0.0 };
    CheckReport::gated("held-disturbance quadrature convergence ratio", ratio, 0.25)
}

/// Shortfall of the ground-truth integrator's observed convergence order
/// below fourth order, measured against the exact discrete flow for a
/// constant disturbance.
fn truth_integrator_order_check() -> CheckReport {
    let params = ServoParams::new(0.1, 1.0).unwrap();
    let cm = build_continuous(&params);
    let ts = 0.05;
    let dm = discretize(&cm, ts).unwrap();
    let x0 = State::new(0.2, -0.5);
    let (u, tau) = (1.0, 0.3);
    let exact = step_discrete(&dm, &x0, u, tau);
    let err = |substeps: usize| {
        let s = step_truth(&params, &x0, u, |_, _| tau, 0.0, ts, substeps);
        ((s.q - exact.q).powi(2) + (s.qdot - exact.qdot).powi(2)).sqrt()
    };
    let errors: Vec<f64> = [1usize, 2, 4].iter().map(|&s| err(s)).collect();
    let mut min_order = f64::INFINITY;
    for w in errors.windows(2) {
        min_order = min_order.min((w[0] / w[1]).log2());
    }
    CheckReport::gated(
        "truth integrator convergence order shortfall",
        (4.0 - min_order).max(0.0),
        0.5,
    )
}

fn constant_history(c: f64) -> DisturbanceHistory {
    let mut h = DisturbanceHistory::default();
    for _ in 0..3 {
        h.push(c);
    }
    h
}

/// The reconstructed second-order coefficients must vanish on constants.
fn derived_coefficients_vanish_check() -> CheckReport {
    let c = 2.0;
    let value = delta_estimate(&constant_history(c), DeltaOrder::Second, CoeffMode::Derived);
    CheckReport::gated(
        "second-order variation model vanishes on constants (reconstructed)",
        value.abs(),
        1e-15,
    )
}

/// Informational: the printed second-order coefficient set leaves the
/// constant itself behind instead of vanishing. Reported as the deviation of
/// the estimate from that expected non-zero value.
fn printed_coefficients_residual_check() -> CheckReport {
    let c = 2.0;
    let value = delta_estimate(
        &constant_history(c),
        DeltaOrder::Second,
        CoeffMode::PaperLiteral,
    );
    CheckReport::informational(
        "second-order variation model on constants (printed coefficients, expected nonzero)",
        (value - c).abs(),
        1e-15,
    )
}
