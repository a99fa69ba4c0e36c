use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Continuous state of the actuator plus the hysteresis internal variable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HybridState {
    /// Motor position, rad.
    pub theta: f64,
    /// Spring output position, rad.
    pub psi: f64,
    /// Link position, rad.
    pub q: f64,
    pub psi_dot: f64,
    pub q_dot: f64,
    /// Hysteresis loss state, rad.
    pub h: f64,
}

impl HybridState {
    pub const DIM: usize = 6;

    pub fn at_rest(theta: f64, psi: f64, q: f64) -> HybridState {
        HybridState {
            theta,
            psi,
            q,
            ..Default::default()
        }
    }

    /// Spring deflection `theta - psi`.
    pub fn phi(&self) -> f64 {
        self.theta - self.psi
    }

    pub fn xi(&self) -> Vector2<f64> {
        Vector2::new(self.psi, self.q)
    }

    pub fn xi_dot(&self) -> Vector2<f64> {
        Vector2::new(self.psi_dot, self.q_dot)
    }

    pub fn with_xi_dot(self, v: Vector2<f64>) -> HybridState {
        HybridState {
            psi_dot: v[0],
            q_dot: v[1],
            ..self
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.theta, self.psi, self.q, self.psi_dot, self.q_dot, self.h]
    }

    pub fn from_array(a: [f64; 6]) -> HybridState {
        HybridState {
            theta: a[0],
            psi: a[1],
            q: a[2],
            psi_dot: a[3],
            q_dot: a[4],
            h: a[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// True when `|theta| <= theta_range` and `|phi| <= phi_max` (with slack `tol`).
    pub fn within_limits(&self, theta_range: f64, phi_max: f64, tol: f64) -> bool {
        self.theta.abs() <= theta_range + tol && self.phi().abs() <= phi_max + tol
    }
}
