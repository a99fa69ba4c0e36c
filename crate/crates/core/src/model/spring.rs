use serde::{Deserialize, Serialize};

use super::params::{ActuatorParams, HysteresisForm};

/// Constitutive law of the series spring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpringLaw {
    /// `tau_s = K * phi`; used by the optimizer.
    #[default]
    Linear,
    /// `tau_s = K * (phi - h)` with `h` following the Bouc-Wen ODE.
    BoucWen,
}

pub fn spring_torque(theta: f64, psi: f64, h: f64, law: SpringLaw, params: &ActuatorParams) -> f64 {
    let phi = theta - psi;
    match law {
        SpringLaw::Linear => params.stiffness * phi,
        SpringLaw::BoucWen => params.stiffness * (phi - h),
    }
}

/// Rate of the hysteresis loss state.
///
/// `phi` only enters the position-magnitude form.
pub fn hysteresis_rate(phi: f64, phi_dot: f64, h: f64, params: &ActuatorParams) -> f64 {
    let magnitude = match params.hysteresis_form {
        HysteresisForm::RateMagnitude => phi_dot.abs(),
        HysteresisForm::PositionMagnitude => phi.abs(),
    };
    params.alpha * phi_dot - params.beta * magnitude * h - params.gamma * phi_dot * h.abs()
}
