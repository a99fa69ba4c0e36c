use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::params::ActuatorParams;
use super::state::HybridState;

/// Gravity torque vector `[0, m g l sin q]`.
pub fn gravity_vector(q: f64, params: &ActuatorParams) -> Vector2<f64> {
    Vector2::new(0.0, params.gravity_torque() * q.sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// Kinetic energy of the spring output and link, and potential energy of the
/// (linear) spring plus gravity, with the hanging link as datum.
pub fn energy(state: &HybridState, params: &ActuatorParams) -> Energy {
    let kinetic = 0.5 * params.j_psi * state.psi_dot.powi(2) + 0.5 * params.j_q * state.q_dot.powi(2);
    let potential =
        0.5 * params.stiffness * state.phi().powi(2) + params.gravity_torque() * (1.0 - state.q.cos());
    Energy { kinetic, potential }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn gravity_examples() {
        let p = ActuatorParams::default();
        assert_eq!(gravity_vector(0.0, &p), Vector2::zeros());
        assert_abs_diff_eq!(gravity_vector(FRAC_PI_2, &p)[1], 2.3544, epsilon = 1e-12);
        assert_abs_diff_eq!(gravity_vector(-FRAC_PI_2, &p)[1], -2.3544, epsilon = 1e-12);
    }

    #[test]
    fn energy_examples() {
        let p = ActuatorParams::default();
        assert_eq!(energy(&HybridState::at_rest(0.1, 0.1, 0.0), &p), Energy::default());
        let e = energy(&HybridState::at_rest(0.3, 0.0, 0.0), &p);
        assert_abs_diff_eq!(e.potential, 0.675, epsilon = 1e-12);
        let e = energy(&HybridState::at_rest(0.0, 0.0, FRAC_PI_2), &p);
        assert_abs_diff_eq!(e.potential, 2.3544, epsilon = 1e-12);
        assert_eq!(e.kinetic, 0.0);
    }

    proptest! {
        #[test]
        fn energies_non_negative(
            theta in -2.0f64..2.0, psi in -2.0f64..2.0, q in -7.0f64..7.0,
            psi_dot in -10.0f64..10.0, q_dot in -10.0f64..10.0,
        ) {
            let p = ActuatorParams::default();
            let s = HybridState { theta, psi, q, psi_dot, q_dot, h: 0.0 };
            let e = energy(&s, &p);
            prop_assert!(e.kinetic >= 0.0);
            prop_assert!(e.potential >= 0.0);
            if e.kinetic == 0.0 { prop_assert!(psi_dot == 0.0 && q_dot == 0.0); }
        }
    }
}
