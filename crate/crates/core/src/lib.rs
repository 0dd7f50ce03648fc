//! Discrete-time disturbance observer simulation for a second-order servo
//! system.
//!
//! The crate models one servo axis in continuous and exactly discretized
//! form, implements three disturbance observers on top of the discrete
//! model — the conventional auxiliary-variable observer, a disturbance
//! predictor, and a high-performance observer that feeds back a predicted
//! disturbance variation — and drives them in a fixed-step closed loop with
//! a PD position controller.
//!
//! Module map:
//! - [`plant`]: servo models, zero-order-hold discretization, reference
//!   computations (matrix-exponential series, held-input quadrature), and
//!   ground-truth integration.
//! - [`signals`]: declarative disturbance and reference generators.
//! - [`observers`]: the three observer recursions, gain tuning, and the
//!   disturbance-variation models.
//! - [`control`]: PD law and compensation composition.
//! - [`sim`]: scenario engine, traces, metrics, sweeps.
//! - [`validate`]: the self-check suite behind the `validate` command.

pub mod control;
pub mod error;
pub mod observers;
pub mod plant;
pub mod signals;
pub mod sim;
pub mod validate;

pub use error::Error;
