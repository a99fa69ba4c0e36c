//! Dynamically consistent random initial guesses for the multi-start solve.

use std::f64::consts::TAU;

use rand::Rng;

use super::transcription::{OcpProblem, OCP_STATE_DIM};
use super::FinalTime;

/// Random durations within the plan bounds, summing to a random admissible
/// final time.
fn random_durations<R: Rng + ?Sized>(ocp: &OcpProblem, rng: &mut R) -> Vec<f64> {
    let bounds = &ocp.plan.duration_bounds;
    let min_sum: f64 = bounds.iter().map(|b| b.0).sum();
    let total = match ocp.plan.final_time {
        FinalTime::Fixed(t) => t,
        FinalTime::Free { lo, hi } => {
            let a = lo.max(min_sum);
            a + (hi - a) * rng.random_range(0.3..1.0)
        }
    };
    let weights: Vec<f64> = bounds.iter().map(|_| rng.random_range(0.15..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    weights
        .iter()
        .zip(bounds)
        .map(|(w, &(lo, hi))| (total * w / wsum).clamp(lo, hi))
        .collect()
}

fn rk4(ocp: &OcpProblem, phase: usize, x: &mut [f64; OCP_STATE_DIM], u: f64, h: f64) {
    let f = |x: &[f64; OCP_STATE_DIM]| {
        let z = [x[0], x[1], x[2], x[3], x[4], u];
        ocp.vector_field(phase, &z)
    };
    let add = |a: &[f64; OCP_STATE_DIM], k: f64, d: &[f64; OCP_STATE_DIM]| -> [f64; OCP_STATE_DIM] {
        std::array::from_fn(|i| a[i] + k * d[i])
    };
    let k1 = f(x);
    let k2 = f(&add(x, 0.5 * h, &k1));
    let k3 = f(&add(x, 0.5 * h, &k2));
    let k4 = f(&add(x, h, &k3));
    for i in 0..OCP_STATE_DIM {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Forward-simulates a random, roughly bang-bang motor command that turns
/// around before the motor or deflection limits, and stores the resulting
/// node values.
pub(super) fn simulated_guess<R: Rng + ?Sized>(ocp: &OcpProblem, rng: &mut R) -> Vec<f64> {
    let p = &ocp.params;
    let durations = random_durations(ocp, rng);
    let mut x = ocp.default_guess();
    let mut state = ocp.initial_state();
    let mut t_abs = 0.0;
    let freq = rng.random_range(0.5..4.0);
    let offset = rng.random_range(0.0..TAU);
    let amp = p.u_max * rng.random_range(0.4..1.0);
    for phase in 0..ocp.num_phases() {
        if phase > 0 {
            let r = ocp.reset_map(phase);
            let v = r * nalgebra::Vector2::new(state[3], state[4]);
            state[3] = v[0];
            state[4] = v[1];
        }
        if let Some(i) = ocp.duration_index(phase) {
            x[i] = durations[phase];
        }
        let t_p = ocp.phase_duration(&x, phase);
        let points = ocp.points_per_phase();
        let h = t_p / (points - 1) as f64;
        for pt in 0..points {
            let mut u = amp * (3.0 * (TAU * freq * t_abs + offset).sin()).tanh();
            let phi = state[0] - state[1];
            if (state[0] > 0.85 * p.theta_range || phi > 0.85 * p.phi_max) && u > 0.0 {
                u = -u;
            }
            if (state[0] < -0.85 * p.theta_range || phi < -0.85 * p.phi_max) && u < 0.0 {
                u = -u;
            }
            for c in 0..OCP_STATE_DIM {
                x[ocp.var_index(phase, pt, c)] = state[c];
            }
            x[ocp.var_index(phase, pt, OCP_STATE_DIM)] = u;
            if pt + 1 < points {
                for _ in 0..4 {
                    rk4(ocp, phase, &mut state, u, h / 4.0);
                }
                t_abs += h;
            }
        }
    }
    x
}
