//! Per-mode continuous dynamics, clutch torques and impact resets.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::model::{
    constraint_matrix, friction_torque, gravity_vector, hysteresis_rate, sgn, spring_torque, ActuatorParams,
    HybridState, Mode, ModeMaps, SpringLaw,
};

/// Below this speed a free coordinate is treated as possibly stuck.
pub const STICTION_VELOCITY: f64 = 1e-6;

/// Parameters bundled with the constant per-mode matrices.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ActuatorParams,
    pub law: SpringLaw,
    maps: [ModeMaps; 4],
}

impl Model {
    pub fn new(params: ActuatorParams, law: SpringLaw) -> Result<Model> {
        params.validate()?;
        let mut maps = [ModeMaps {
            accel: Default::default(),
            reset: Default::default(),
        }; 4];
        for mode in Mode::ALL {
            maps[mode.id() as usize] = ModeMaps::new(mode, params.j_psi, params.j_q)?;
        }
        Ok(Model { params, law, maps })
    }

    pub fn maps(&self, mode: Mode) -> &ModeMaps {
        &self.maps[mode.id() as usize]
    }

    fn mass_matrix_inv(&self) -> Vector2<f64> {
        Vector2::new(1.0 / self.params.j_psi, 1.0 / self.params.j_q)
    }

    /// `[tau_s, 0]`
    pub fn spring_vector(&self, state: &HybridState) -> Vector2<f64> {
        Vector2::new(spring_torque(state.theta, state.psi, state.h, self.law, &self.params), 0.0)
    }

    /// Friction vector used by the exact simulator.
    ///
    /// Moving coordinates get Coulomb friction `tau_c sgn(v)`. A free coordinate
    /// slower than [`STICTION_VELOCITY`] whose driving torque stays below its
    /// Coulomb level is held: the Coulomb term cancels the driving torque.
    pub fn stiction_friction(&self, mode: Mode, state: &HybridState) -> Vector2<f64> {
        let p = &self.params;
        let v = state.xi_dot();
        let tau_c = Vector2::new(p.tau_c_psi, p.tau_c_q);
        let viscous = Vector2::new(p.d_psi * v[0], p.d_q * v[1]);
        let driving = self.spring_vector(state) - gravity_vector(state.q, p) - viscous;

        let mut coulomb = Vector2::new(tau_c[0] * sgn(v[0]), tau_c[1] * sgn(v[1]));
        for n in mode.free_directions() {
            let n = Vector2::new(n[0], n[1]);
            let speed = n.dot(&v) / n.dot(&n);
            if speed.abs() >= STICTION_VELOCITY {
                continue;
            }
            let level = n.abs().dot(&tau_c);
            if level == 0.0 {
                continue;
            }
            let push = n.dot(&driving);
            let along = if push.abs() <= level { push } else { level * sgn(push) };
            for i in 0..2 {
                if n[i] != 0.0 {
                    coulomb[i] = n[i] * tau_c[i] / level * along;
                }
            }
        }
        viscous + coulomb
    }

    fn friction(&self, mode: Mode, state: &HybridState, smoothed: bool) -> Vector2<f64> {
        if smoothed {
            friction_torque(state.psi_dot, state.q_dot, &self.params, true)
        } else {
            self.stiction_friction(mode, state)
        }
    }

    /// Net applied generalized force `tau_s - g - tau_f`.
    pub fn applied_force(&self, mode: Mode, state: &HybridState, smoothed: bool) -> Vector2<f64> {
        self.spring_vector(state) - gravity_vector(state.q, &self.params) - self.friction(mode, state, smoothed)
    }

    /// Constrained accelerations of `[psi, q]`.
    pub fn acceleration(&self, mode: Mode, state: &HybridState, smoothed: bool) -> Vector2<f64> {
        self.maps(mode).accel * self.applied_force(mode, state, smoothed)
    }

    /// Time derivative of `[theta, psi, q, psi_dot, q_dot, h]`.
    pub fn derivative(&self, mode: Mode, state: &HybridState, u: f64, smoothed: bool) -> [f64; 6] {
        let acc = self.acceleration(mode, state, smoothed);
        let h_dot = match self.law {
            SpringLaw::Linear => 0.0,
            SpringLaw::BoucWen => hysteresis_rate(state.phi(), u - state.psi_dot, state.h, &self.params),
        };
        [u, state.psi_dot, state.q_dot, acc[0], acc[1], h_dot]
    }

    /// State right after the clutches switch to `mode_to`, with the impulse that produced it.
    ///
    /// Post-impact velocities are the mass-weighted projection of the
    /// pre-impact velocities onto the free directions of `mode_to`, so the
    /// constraints hold exactly and a second reset is a no-op.
    pub fn reset(&self, mode_to: Mode, state: &HybridState) -> (HybridState, DVector<f64>) {
        let c = constraint_matrix(mode_to);
        let v = state.xi_dot();
        let violated = c.row_iter().any(|r| r[0] * v[0] + r[1] * v[1] != 0.0);
        if !violated {
            return (*state, DVector::zeros(c.nrows()));
        }
        let lambda = impact_impulse(mode_to, v, &self.params);
        let b = Vector2::new(self.params.j_psi, self.params.j_q);
        let mut post = Vector2::zeros();
        for n in mode_to.free_directions() {
            let n = Vector2::new(n[0], n[1]);
            let speed = n.component_mul(&b).dot(&v) / n.component_mul(&b).dot(&n);
            post += n * speed;
        }
        (state.with_xi_dot(post), lambda)
    }

    /// `B^-1 C^T Lambda`, the velocity jump caused by an impulse.
    pub fn impulse_velocity_change(&self, mode: Mode, lambda: &DVector<f64>) -> Vector2<f64> {
        let c = constraint_matrix(mode);
        let f = c.transpose() * lambda;
        self.mass_matrix_inv().component_mul(&Vector2::new(f[0], f[1]))
    }
}

fn mass_inverse(params: &ActuatorParams) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / params.j_psi, 1.0 / params.j_q]))
}

/// `(C B^-1 C^T)^-1 C B^-1`
fn constraint_projector(mode: Mode, params: &ActuatorParams) -> Result<DMatrix<f64>> {
    let c = constraint_matrix(mode);
    let b_inv = mass_inverse(params);
    let s = &c * &b_inv * c.transpose();
    let s_inv = s.try_inverse().ok_or(Error::SingularConstraint(mode))?;
    Ok(s_inv * c * b_inv)
}

/// Clutch torque keeping `C xi_dot = 0` during continuous motion:
/// `lambda = (C B^-1 C^T)^-1 C B^-1 (g + tau_f - tau_s)`.
///
/// Uses exact Coulomb friction `tau_c sgn(v)` without stiction. DEC has no
/// constraints and returns an empty vector.
pub fn constraint_torque(
    mode: Mode,
    state: &HybridState,
    _u: f64,
    params: &ActuatorParams,
    law: SpringLaw,
) -> DVector<f64> {
    let tau_f = friction_torque(state.psi_dot, state.q_dot, params, false);
    let tau_s = spring_torque(state.theta, state.psi, state.h, law, params);
    let rhs = gravity_vector(state.q, params) + tau_f - Vector2::new(tau_s, 0.0);
    constraint_torque_for(mode, &rhs, params)
}

/// `lambda` for a given `g + tau_f - tau_s`.
pub fn constraint_torque_for(mode: Mode, resisting: &Vector2<f64>, params: &ActuatorParams) -> DVector<f64> {
    if mode == Mode::Dec {
        return DVector::zeros(0);
    }
    let proj = constraint_projector(mode, params)
        .expect("constraint matrices of all modes have full row rank for positive inertias");
    proj * DVector::from_column_slice(resisting.as_slice())
}

/// Velocity-constrained continuous dynamics of `mode`.
///
/// `theta_dot = u` (ideal velocity-controlled motor). The hysteresis rate is
/// zero for the linear spring law. With `smoothed`, Coulomb friction uses
/// `tanh`; otherwise the exact law with stiction at rest is used.
pub fn continuous_dynamics(
    mode: Mode,
    state: &HybridState,
    u: f64,
    params: &ActuatorParams,
    law: SpringLaw,
    smoothed: bool,
) -> Result<[f64; 6]> {
    Ok(Model::new(*params, law)?.derivative(mode, state, u, smoothed))
}

/// Contact impulse `Lambda = -(C B^-1 C^T)^-1 C xi_dot_minus` enforcing the
/// constraints of `mode_to`. Empty for DEC.
pub fn impact_impulse(mode_to: Mode, xi_dot_minus: Vector2<f64>, params: &ActuatorParams) -> DVector<f64> {
    if mode_to == Mode::Dec {
        return DVector::zeros(0);
    }
    let c = constraint_matrix(mode_to);
    let b_inv = mass_inverse(params);
    let s = &c * &b_inv * c.transpose();
    let s_inv = s
        .try_inverse()
        .expect("constraint matrices of all modes have full row rank for positive inertias");
    -(s_inv * c * DVector::from_column_slice(xi_dot_minus.as_slice()))
}

/// Reset map of a switch into `mode_to`: positions, `theta` and `h` are
/// kept, velocities jump by `B^-1 C^T Lambda`.
pub fn reset(mode_to: Mode, state: &HybridState, params: &ActuatorParams) -> Result<HybridState> {
    Ok(Model::new(*params, SpringLaw::Linear)?.reset(mode_to, state).0)
}
