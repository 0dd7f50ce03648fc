//! Prints the benchmark-scenario metrics for the controller variants the
//! acceptance suite compares. The regression bounds frozen in that suite
//! were read off a run of this example.

use dobsim::control::ControllerMode;
use dobsim::observers::{CoeffMode, DeltaOrder};
use dobsim::sim::{compute_metrics, defaults, run_scenario, ScenarioConfig};

fn report(label: &str, mode: ControllerMode) {
    let cfg = ScenarioConfig {
        mode,
        ..ScenarioConfig::default()
    };
    let trace = run_scenario(&cfg).expect("benchmark scenario runs");
    let m = compute_metrics(&trace, defaults::SETTLE_FRACTION).expect("metrics");
    println!(
        "{label:<18} rms_tracking {:.6e}  rms_est_error {:.6e}  max_est_error {:.6e}",
        m.rms_tracking, m.rms_est_error, m.max_est_error
    );
}

fn main() {
    report("pd-only", ControllerMode::PdOnly {});
    for g in [0.15, 0.25, 0.35] {
        report(&format!("cdob g={g}"), ControllerMode::PdPlusCdob { g });
    }
    report(
        "hpdob order 1",
        ControllerMode::PdPlusHpdob {
            order: DeltaOrder::First,
            g_p: 0.15,
            g_o: 0.15,
            coeff_mode: CoeffMode::Derived,
        },
    );
    report(
        "hpdob order 2",
        ControllerMode::PdPlusHpdob {
            order: DeltaOrder::Second,
            g_p: 0.15,
            g_o: 0.15,
            coeff_mode: CoeffMode::Derived,
        },
    );
}
