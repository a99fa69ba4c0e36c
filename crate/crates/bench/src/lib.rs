//! Benchmarks live in `benches/`; run them with `cargo bench -p bsa-bench`.

use bsa_core::{ActuatorParams, HybridState};

/// A loaded, moving state used as the common starting point.
pub fn moving_state() -> HybridState {
    HybridState {
        theta: 0.1,
        psi: -0.05,
        q: 0.3,
        psi_dot: 1.5,
        q_dot: -0.8,
        h: 0.0,
    }
}

pub fn params() -> ActuatorParams {
    ActuatorParams::default()
}
