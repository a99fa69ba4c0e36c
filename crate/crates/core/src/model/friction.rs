use nalgebra::Vector2;

use super::params::ActuatorParams;

/// `sign` with `sign(0) = 0`.
pub fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Bearing friction `[tau_c_psi sgn(psi') + d_psi psi', tau_c_q sgn(q') + d_q q']`.
///
/// The vector resists motion: it enters the equations of motion on the same
/// side as the inertial term. With `smoothed`, `sgn(v)` becomes `tanh(v / eps_sign)`.
pub fn friction_torque(psi_dot: f64, q_dot: f64, params: &ActuatorParams, smoothed: bool) -> Vector2<f64> {
    let s = |v: f64| {
        if smoothed {
            (v / params.eps_sign).tanh()
        } else {
            sgn(v)
        }
    };
    Vector2::new(
        params.tau_c_psi * s(psi_dot) + params.d_psi * psi_dot,
        params.tau_c_q * s(q_dot) + params.d_q * q_dot,
    )
}

/// Smoothed friction of one body together with its first and second
/// derivatives in the velocity.
pub fn smoothed_friction_derivs(v: f64, tau_c: f64, d: f64, eps: f64) -> (f64, f64, f64) {
    let t = (v / eps).tanh();
    let sech2 = 1.0 - t * t;
    let f = tau_c * t + d * v;
    let df = tau_c * sech2 / eps + d;
    let ddf = -2.0 * tau_c * t * sech2 / (eps * eps);
    (f, df, ddf)
}
