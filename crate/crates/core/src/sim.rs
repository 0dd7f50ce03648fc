//! Fixed-step closed-loop scenario engine: digital controller and observers
//! at the sampling period, ground-truth plant at substep resolution, trace
//! recording, summary metrics, and parameter sweeps.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{compose_control, pd_control, ControllerMode, PdGains};
use crate::error::Error;
use crate::observers::{
    cdob_update, delta_estimate, hpdob_update, predictor_update, tune_gain, CdobState, HpdobState,
    ObserverGain, PredictorState,
};
use crate::plant::{
    build_continuous, discretize, nominal_disturbance, step_discrete, step_truth, PlantPair,
    ServoParams, State,
};
use crate::signals::{eval_disturbance, eval_reference, DisturbanceSpec, ReferenceSpec};

/// Baseline scenario values; an empty configuration file resolves to these.
pub mod defaults {
    use super::*;

    /// Nominal rotor inertia (kg·m²).
    pub const INERTIA: f64 = 0.125;
    /// Nominal viscous friction (N·m·s/rad).
    pub const VISCOUS: f64 = 0.045;
    /// Sampling period (s).
    pub const TS: f64 = 1e-4;
    /// Scenario length (s).
    pub const DURATION: f64 = 2.0;
    /// Ground-truth integrator substeps per control period.
    pub const SUBSTEPS: usize = 10;
    /// Proportional gain (N·m/rad).
    pub const KP: f64 = 100.0;
    /// Derivative gain (N·m·s/rad).
    pub const KD: f64 = 10.0;
    /// Baseline observer tuning parameter.
    pub const OBSERVER_GAIN: f64 = 0.15;
    /// Fraction of the trace skipped as transient when computing metrics.
    pub const SETTLE_FRACTION: f64 = 0.2;

    /// Benchmark disturbance: two sinusoids plus Coulomb friction and
    /// quadratic drag, so the torque varies both with time and with state
    /// within every sampling period.
    pub fn disturbance() -> DisturbanceSpec {
        DisturbanceSpec::Sum {
            members: vec![
                DisturbanceSpec::SineSum {
                    components: vec![
                        crate::signals::SineComponent {
                            amplitude: 5.0,
                            frequency: 1.0,
                            phase: 0.0,
                        },
                        crate::signals::SineComponent {
                            amplitude: 2.0,
                            frequency: 3.0,
                            phase: std::f64::consts::FRAC_PI_4,
                        },
                    ],
                },
                DisturbanceSpec::StateDependent {
                    extra_viscous: 0.0,
                    coulomb: 0.5,
                    quadratic_drag: 0.1,
                },
            ],
        }
    }

    /// Trajectory-tracking reference (default).
    pub fn tracking_reference() -> ReferenceSpec {
        ReferenceSpec::Sine {
            amplitude: 1.0,
            frequency: 0.5,
        }
    }

    /// Regulation reference.
    pub fn regulation_reference() -> ReferenceSpec {
        ReferenceSpec::Step {
            amplitude: 1.0,
            start: 0.0,
        }
    }

    pub fn servo_params() -> ServoParams {
        ServoParams::new(INERTIA, VISCOUS).expect("baseline parameters are valid")
    }
}

/// How the plant is advanced between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantModel {
    /// Ground-truth continuous plant integrated at substep resolution.
    ContinuousTruth,
    /// The held-disturbance discrete model itself is the plant, with the
    /// lumped disturbance sampled at the control instants. Makes the
    /// observer error recursions exact, for property tests.
    PureDiscrete,
}

/// Standard deviations of additive Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseStd {
    /// rad
    pub q: f64,
    /// rad/s
    pub qdot: f64,
}

impl NoiseStd {
    pub fn enabled(&self) -> bool {
        self.q != 0.0 || self.qdot != 0.0
    }
}

/// Complete definition of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub pair: PlantPair,
    /// Sampling period (s).
    pub ts: f64,
    /// Scenario length (s).
    pub duration: f64,
    /// Ground-truth integrator substeps per control period.
    pub substeps: usize,
    pub mode: ControllerMode,
    pub pd: PdGains,
    pub disturbance: DisturbanceSpec,
    pub reference: ReferenceSpec,
    pub initial_state: State,
    pub noise_std: NoiseStd,
    /// Seed for the measurement-noise generator.
    pub seed: u64,
    pub plant_model: PlantModel,
    /// Optional symmetric torque limit (N·m) applied after composition.
    pub torque_limit: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            pair: PlantPair::matched(defaults::servo_params()),
            ts: defaults::TS,
            duration: defaults::DURATION,
            substeps: defaults::SUBSTEPS,
            mode: ControllerMode::PdPlusCdob {
                g: defaults::OBSERVER_GAIN,
            },
            pd: PdGains {
                kp: defaults::KP,
                kd: defaults::KD,
            },
            disturbance: defaults::disturbance(),
            reference: defaults::tracking_reference(),
            initial_state: State::default(),
            noise_std: NoiseStd::default(),
            seed: 0,
            plant_model: PlantModel::ContinuousTruth,
            torque_limit: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sampling period must be positive, got {}",
                self.ts
            )));
        }
        if !(self.duration.is_finite() && self.duration > self.ts) {
            return Err(Error::InvalidConfig(format!(
                "duration must exceed the sampling period, got duration={} ts={}",
                self.duration, self.ts
            )));
        }
        if self.substeps < 1 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        self.mode.validate().map_err(reclassify)?;
        PdGains::new(self.pd.kp, self.pd.kd).map_err(reclassify)?;
        self.disturbance.validate().map_err(reclassify)?;
        self.reference.validate().map_err(reclassify)?;
        if !self.initial_state.is_finite() {
            return Err(Error::InvalidConfig("initial state must be finite".into()));
        }
        if !(self.noise_std.q.is_finite()
            && self.noise_std.q >= 0.0
            && self.noise_std.qdot.is_finite()
            && self.noise_std.qdot >= 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "noise standard deviations must be finite and nonnegative, got {:?}",
                self.noise_std
            )));
        }
        if let Some(limit) = self.torque_limit {
            if !(limit.is_finite() && limit > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "torque limit must be finite and positive, got {limit}"
                )));
            }
        }
        Ok(())
    }

    /// Number of recorded samples: one per control instant from 0 through
    /// `duration` inclusive.
    pub fn sample_count(&self) -> usize {
        (self.duration / self.ts).round() as usize + 1
    }
}

fn reclassify(err: Error) -> Error {
    match err {
        Error::InvalidParameter(msg) => Error::InvalidConfig(msg),
        other => other,
    }
}

/// Any state or torque magnitude above this, or any non-finite value, marks
/// the run as diverged and stops recording.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Sampled time series of one scenario run, one record per control step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub q_ref: Vec<f64>,
    pub qdot_ref: Vec<f64>,
    pub u: Vec<f64>,
    /// External disturbance torque at the sample instant.
    pub tau_d: Vec<f64>,
    /// Ground-truth lumped nominal disturbance at the sample instant.
    pub tau_dn: Vec<f64>,
    /// Active observer estimate (zero when no observer runs).
    pub tau_hat: Vec<f64>,
    /// `tau_dn − tau_hat`.
    pub est_error: Vec<f64>,
    /// Set when the run hit the divergence guard before completing.
    pub diverged: bool,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            qdot: Vec::with_capacity(n),
            q_ref: Vec::with_capacity(n),
            qdot_ref: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            tau_d: Vec::with_capacity(n),
            tau_dn: Vec::with_capacity(n),
            tau_hat: Vec::with_capacity(n),
            est_error: Vec::with_capacity(n),
            diverged: false,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        t: f64,
        x: &State,
        q_ref: f64,
        qdot_ref: f64,
        u: f64,
        tau_d: f64,
        tau_dn: f64,
        tau_hat: f64,
    ) {
        self.t.push(t);
        self.q.push(x.q);
        self.qdot.push(x.qdot);
        self.q_ref.push(q_ref);
        self.qdot_ref.push(qdot_ref);
        self.u.push(u);
        self.tau_d.push(tau_d);
        self.tau_dn.push(tau_dn);
        self.tau_hat.push(tau_hat);
        self.est_error.push(tau_dn - tau_hat);
    }

    pub const CSV_HEADER: &'static str = "t,q,qdot,q_ref,qdot_ref,u,tau_d,tau_dn,tau_hat,est_error";

    /// Writes the trace as CSV: a header row then one row per control step.
    /// Floats use shortest round-trip formatting, so re-parsing reproduces
    /// the values bit for bit.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                self.t[i],
                self.q[i],
                self.qdot[i],
                self.q_ref[i],
                self.qdot_ref[i],
                self.u[i],
                self.tau_d[i],
                self.tau_dn[i],
                self.tau_hat[i],
                self.est_error[i],
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

/// Scalar summaries of one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// RMS of `q_ref − q` (rad) over the post-settle window.
    pub rms_tracking: f64,
    /// RMS of the estimation error (N·m) over the post-settle window.
    pub rms_est_error: f64,
    /// Maximum |estimation error| (N·m) over the post-settle window.
    pub max_est_error: f64,
    pub diverged: bool,
    /// Fraction of the trace that was skipped as transient.
    pub settle_fraction: f64,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Computes summary metrics over the samples after the settle window.
/// Diverged traces are summarized over their recorded (pre-divergence)
/// samples.
pub fn compute_metrics(trace: &Trace, settle_fraction: f64) -> Result<Metrics, Error> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if !(0.0..1.0).contains(&settle_fraction) {
        return Err(Error::InvalidParameter(format!(
            "settle fraction must be in [0, 1), got {settle_fraction}"
        )));
    }
    let n = trace.len();
    // Keep at least one sample even for short, diverged traces.
    let skip = (((n as f64) * settle_fraction).floor() as usize).min(n - 1);
    let window = skip..n;
    let count = (n - skip) as f64;

    let mut tracking_sq = 0.0;
    let mut est_sq = 0.0;
    let mut max_est = 0.0f64;
    for i in window {
        let te = trace.q_ref[i] - trace.q[i];
        tracking_sq += te * te;
        let ee = trace.est_error[i];
        est_sq += ee * ee;
        max_est = max_est.max(ee.abs());
    }
    Ok(Metrics {
        rms_tracking: (tracking_sq / count).sqrt(),
        rms_est_error: (est_sq / count).sqrt(),
        max_est_error: max_est,
        diverged: trace.diverged,
        settle_fraction,
    })
}

/// Observer stack assembled for one run.
enum ObserverStack {
    None,
    Cdob {
        gain: ObserverGain,
        state: CdobState,
    },
    Hpdob {
        predictor_gain: ObserverGain,
        observer_gain: ObserverGain,
        predictor: PredictorState,
        observer: HpdobState,
    },
}

impl ObserverStack {
    fn build(mode: &ControllerMode, d_d: &nalgebra::Vector2<f64>) -> Result<Self, Error> {
        Ok(match mode {
            ControllerMode::PdOnly {} => Self::None,
            ControllerMode::PdPlusCdob { g } => Self::Cdob {
                gain: tune_gain(*g, d_d)?,
                state: CdobState::new(),
            },
            ControllerMode::PdPlusHpdob {
                order,
                g_p,
                g_o,
                coeff_mode,
            } => Self::Hpdob {
                predictor_gain: tune_gain(*g_p, d_d)?,
                observer_gain: tune_gain(*g_o, d_d)?,
                predictor: PredictorState::new(),
                observer: HpdobState::new(*order, *coeff_mode),
            },
        })
    }

    /// Current-step estimate from the pre-update observer state.
    fn estimate(&self, x: &State) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Cdob { gain, state } => state.estimate(gain, x),
            Self::Hpdob {
                observer_gain,
                observer,
                ..
            } => observer.estimate(observer_gain, x),
        }
    }

    /// Advances the observers with the sampled state and the applied torque.
    /// The predictor steps first; its freshly pushed history feeds the
    /// variation estimate used by the high-performance update of the same
    /// step.
    fn advance(&mut self, x: &State, u: f64, dm: &crate::plant::DiscreteModel) {
        match self {
            Self::None => {}
            Self::Cdob { gain, state } => {
                let (next, _) = cdob_update(state, x, u, dm, gain);
                *state = next;
            }
            Self::Hpdob {
                predictor_gain,
                observer_gain,
                predictor,
                observer,
            } => {
                let (p_next, _) = predictor_update(predictor, x, u, dm, predictor_gain);
                let delta = delta_estimate(&p_next.history, observer.order, observer.coeff_mode);
                let (o_next, _) = hpdob_update(observer, x, u, delta, dm, observer_gain);
                *predictor = p_next;
                *observer = o_next;
            }
        }
    }
}

/// Runs one scenario and records the sampled trace.
///
/// Per control step: sample the state (plus optional measurement noise),
/// evaluate the reference, extract the observer estimate, compose and limit
/// the torque, record, advance the observers, then advance the plant to the
/// next sample.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace, Error> {
    cfg.validate()?;

    let cm_true = build_continuous(&cfg.pair.true_params);
    let cm_nom = build_continuous(&cfg.pair.nominal_params);
    let dm_nom = discretize(&cm_nom, cfg.ts).map_err(reclassify)?;

    let mut observers = ObserverStack::build(&cfg.mode, &dm_nom.d).map_err(reclassify)?;

    // The noise generator is created only when noise is requested; quiet
    // scenarios never touch the random source.
    let mut rng = if cfg.noise_std.enabled() {
        Some((
            ChaCha8Rng::seed_from_u64(cfg.seed),
            Normal::new(0.0, cfg.noise_std.q)
                .map_err(|e| Error::InvalidConfig(format!("position noise: {e}")))?,
            Normal::new(0.0, cfg.noise_std.qdot)
                .map_err(|e| Error::InvalidConfig(format!("velocity noise: {e}")))?,
        ))
    } else {
        None
    };

    let n = cfg.sample_count();
    let mut trace = Trace::with_capacity(n);
    let mut x = cfg.initial_state;

    for k in 0..n {
        let t = k as f64 * cfg.ts;

        if !x.is_finite() || x.q.abs() > DIVERGENCE_LIMIT || x.qdot.abs() > DIVERGENCE_LIMIT {
            trace.diverged = true;
            break;
        }

        let x_meas = match &mut rng {
            Some((rng, nq, nv)) => State::new(x.q + nq.sample(rng), x.qdot + nv.sample(rng)),
            None => x,
        };

        let (q_ref, qdot_ref) = eval_reference(&cfg.reference, t);
        let tau_hat = observers.estimate(&x_meas);
        let u_raw = match cfg.mode {
            ControllerMode::PdOnly {} => pd_control((q_ref, qdot_ref), &x_meas, &cfg.pd),
            _ => compose_control(pd_control((q_ref, qdot_ref), &x_meas, &cfg.pd), tau_hat),
        };

        // Divergence is judged on the unlimited torque: a saturating limiter
        // would otherwise mask an exploding estimate.
        if !u_raw.is_finite() || u_raw.abs() > DIVERGENCE_LIMIT {
            trace.diverged = true;
            break;
        }
        let u = match cfg.torque_limit {
            Some(limit) => u_raw.clamp(-limit, limit),
            None => u_raw,
        };

        let tau_d = eval_disturbance(&cfg.disturbance, t, &x);
        let tau_dn = nominal_disturbance(&x, u, tau_d, &cm_true, &cm_nom);

        trace.push(t, &x, q_ref, qdot_ref, u, tau_d, tau_dn, tau_hat);
        observers.advance(&x_meas, u, &dm_nom);

        if k + 1 < n {
            x = match cfg.plant_model {
                PlantModel::ContinuousTruth => step_truth(
                    &cfg.pair.true_params,
                    &x,
                    u,
                    |t, s| eval_disturbance(&cfg.disturbance, t, s),
                    t,
                    cfg.ts,
                    cfg.substeps,
                ),
                PlantModel::PureDiscrete => step_discrete(&dm_nom, &x, u, tau_dn),
            };
        }
    }

    Ok(trace)
}

/// Applies a named parameter path to a configuration. Paths:
/// `g` (observer tuning; sets both gains for the high-performance mode),
/// `g_p`, `g_o`, `kp`, `kd`, `ts`, `duration`, `substeps`, `seed`.
pub fn set_parameter(cfg: &mut ScenarioConfig, parameter: &str, value: f64) -> Result<(), Error> {
    match parameter {
        "g" => match &mut cfg.mode {
            ControllerMode::PdPlusCdob { g } => *g = value,
            ControllerMode::PdPlusHpdob { g_p, g_o, .. } => {
                *g_p = value;
                *g_o = value;
            }
            ControllerMode::PdOnly {} => {
                return Err(Error::InvalidConfig(
                    "parameter `g` does not apply to the PD-only mode".into(),
                ))
            }
        },
        "g_p" => match &mut cfg.mode {
            ControllerMode::PdPlusHpdob { g_p, .. } => *g_p = value,
            _ => {
                return Err(Error::InvalidConfig(
                    "parameter `g_p` applies only to the high-performance mode".into(),
                ))
            }
        },
        "g_o" => match &mut cfg.mode {
            ControllerMode::PdPlusHpdob { g_o, .. } => *g_o = value,
            _ => {
                return Err(Error::InvalidConfig(
                    "parameter `g_o` applies only to the high-performance mode".into(),
                ))
            }
        },
        "kp" => cfg.pd.kp = value,
        "kd" => cfg.pd.kd = value,
        "ts" => cfg.ts = value,
        "duration" => cfg.duration = value,
        "substeps" => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "substeps must be a positive integer, got {value}"
                )));
            }
            cfg.substeps = value as usize;
        }
        "seed" => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "seed must be a nonnegative integer, got {value}"
                )));
            }
            cfg.seed = value as u64;
        }
        other => return Err(Error::UnknownSweepParameter(other.to_string())),
    }
    Ok(())
}

/// Runs one independent scenario per value of the named parameter, in order.
pub fn sweep(
    base: &ScenarioConfig,
    parameter: &str,
    values: &[f64],
) -> Result<Vec<(f64, Metrics)>, Error> {
    let mut results = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        set_parameter(&mut cfg, parameter, value)?;
        let trace = run_scenario(&cfg)?;
        let metrics = compute_metrics(&trace, defaults::SETTLE_FRACTION)?;
        results.push((value, metrics));
    }
    Ok(results)
}
