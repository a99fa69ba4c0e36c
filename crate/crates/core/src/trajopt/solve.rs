use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::guess::simulated_guess;
use super::transcription::{OcpProblem, OCP_STATE_DIM};
use super::Direction;
use crate::error::Result;
use crate::model::{HybridState, Mode};
use crate::nlp::{solve_from, IpmOptions, NlpSolution, SolveStatus};
use crate::sim::{execute_schedule, ControlSignal, HybridTrajectory, PhaseSpec, Schedule, SimOptions};

/// Node values of one phase on absolute time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrajectory {
    pub mode: Mode,
    pub start: f64,
    pub duration: f64,
    pub times: Vec<f64>,
    pub states: Vec<[f64; OCP_STATE_DIM]>,
    pub controls: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub phases: Vec<PhaseTrajectory>,
    /// `-q_dot` at the final node (sign flipped for a negative drive
    /// direction), without the objective scale.
    pub objective: f64,
    pub direction: Direction,
    pub status: SolveStatus,
    pub iterations: usize,
    pub constraint_violation: f64,
    /// Raw NLP decision vector.
    pub x: Vec<f64>,
    pub starts: Vec<StartRecord>,
}

impl Solution {
    pub fn final_q_dot(&self) -> f64 {
        -self.objective * self.direction.sign()
    }

    /// Final link speed along the drive direction.
    pub fn final_speed(&self) -> f64 {
        -self.objective
    }

    pub fn durations(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.duration).collect()
    }

    pub fn final_time(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    pub fn initial_state(&self) -> HybridState {
        let s = self.phases[0].states[0];
        HybridState {
            theta: s[0],
            psi: s[1],
            q: s[2],
            psi_dot: s[3],
            q_dot: s[4],
            h: 0.0,
        }
    }

    /// Commanded schedule with the piecewise-linear motor command through
    /// the control nodes; the command may jump at phase boundaries.
    pub fn schedule(&self) -> Result<Schedule> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for p in &self.phases {
            times.extend_from_slice(&p.times);
            values.extend_from_slice(&p.controls);
        }
        let control = ControlSignal::piecewise_linear(times, values)?;
        let phases = self
            .phases
            .iter()
            .map(|p| PhaseSpec {
                mode: p.mode,
                duration: p.duration,
            })
            .collect();
        Ok(Schedule::new(phases, control))
    }
}

fn unpack(ocp: &OcpProblem, sol: &NlpSolution, starts: Vec<StartRecord>) -> Solution {
    let x = &sol.x;
    let mut phases = Vec::new();
    let mut start = 0.0;
    for p in 0..ocp.num_phases() {
        let duration = ocp.phase_duration(x, p);
        let points = ocp.points_per_phase();
        let end = start + duration;
        let times = (0..points)
            .map(|i| {
                if i + 1 == points {
                    end
                } else {
                    start + duration * i as f64 / (points - 1) as f64
                }
            })
            .collect();
        let states = (0..points)
            .map(|i| std::array::from_fn(|c| x[ocp.var_index(p, i, c)]))
            .collect();
        let controls = (0..points).map(|i| x[ocp.var_index(p, i, OCP_STATE_DIM)]).collect();
        phases.push(PhaseTrajectory {
            mode: ocp.mode(p),
            start,
            duration,
            times,
            states,
            controls,
        });
        start = end;
    }
    Solution {
        phases,
        objective: -ocp.boundary.direction.sign() * x[ocp.final_q_dot_index()],
        direction: ocp.boundary.direction,
        status: sol.status,
        iterations: sol.iterations,
        constraint_violation: sol.constraint_violation,
        x: sol.x.clone(),
        starts,
    }
}

/// Solves `ocp` from several initial guesses in parallel and keeps the best
/// successful one. Start 0 is the deterministic default guess; the others
/// are simulated random commands seeded from the configuration.
///
/// When no start succeeds, the least infeasible iterate is returned with its
/// failure status.
pub fn solve(ocp: &OcpProblem) -> Solution {
    let opts = IpmOptions {
        tol: ocp.config.kkt_tol,
        max_iter: ocp.config.max_iter,
        ..IpmOptions::default()
    };
    let runs: Vec<NlpSolution> = (0..ocp.config.starts)
        .into_par_iter()
        .map(|k| {
            let x0 = if k == 0 {
                ocp.default_guess()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(ocp.config.seed.wrapping_mul(0x9E37_79B9).wrapping_add(k as u64));
                simulated_guess(ocp, &mut rng)
            };
            solve_from(ocp, &x0, &opts)
        })
        .collect();
    let q_idx = ocp.final_q_dot_index();
    let sign = ocp.boundary.direction.sign();
    let objective = |r: &NlpSolution| -sign * r.x[q_idx];
    let records = runs
        .iter()
        .map(|r| StartRecord {
            status: r.status,
            objective: objective(r),
            iterations: r.iterations,
        })
        .collect();
    let best = runs
        .iter()
        .filter(|r| r.status.is_success())
        .min_by(|a, b| objective(a).total_cmp(&objective(b)))
        .or_else(|| {
            runs.iter()
                .min_by(|a, b| a.constraint_violation.total_cmp(&b.constraint_violation))
        })
        .expect("at least one start");
    unpack(ocp, best, records)
}

/// Open-loop replay of a solution through the hybrid simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub trajectory: HybridTrajectory,
    pub final_q_dot: f64,
    /// Final link speed along the drive direction of the solution.
    pub final_speed: f64,
    /// `|q_dot_replay - q_dot_ocp|` at the final time.
    pub gap: f64,
}

/// Replays the optimized schedule and command with `opts` (exact friction by
/// default) and reports the final link-velocity gap to the OCP prediction.
pub fn reconstruct(
    solution: &Solution,
    params: &crate::model::ActuatorParams,
    opts: &SimOptions,
) -> Result<Replay> {
    let schedule = solution.schedule()?;
    let trajectory = execute_schedule(&schedule, &solution.initial_state(), params, opts)?;
    let final_q_dot = trajectory.final_state().q_dot;
    Ok(Replay {
        gap: (final_q_dot - solution.final_q_dot()).abs(),
        final_q_dot,
        final_speed: final_q_dot * solution.direction.sign(),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActuatorParams, SpringLaw};
    use crate::nlp::NlpProblem;
    use crate::sim::Model;
    use crate::trajopt::{build_ocp, Boundary, CollocationConfig, PhasePlan, Scheme};

    fn solve_plan(modes: Vec<Mode>, t_f: f64, params: &ActuatorParams, config: &CollocationConfig) -> (OcpProblem, Solution) {
        let ocp = build_ocp(&PhasePlan::fixed(modes, t_f), params, config, &Boundary::from_rest(0.0)).unwrap();
        let sol = solve(&ocp);
        (ocp, sol)
    }

    #[test]
    fn no_actuation_gives_zero_cost() {
        let params = ActuatorParams {
            u_max: 0.0,
            ..ActuatorParams::default()
        };
        let (_, sol) = solve_plan(vec![Mode::Brk, Mode::Sea], 1.0, &params, &CollocationConfig::default());
        assert!(sol.status.is_success(), "{:?}", sol.status);
        assert!(sol.objective.abs() < 1e-6, "{}", sol.objective);
        let replay = reconstruct(&sol, &params, &SimOptions::default()).unwrap();
        assert!(replay.trajectory.samples.iter().all(|s| s.state.q_dot.abs() < 1e-6 && s.state.q.abs() < 1e-6));
    }

    #[test]
    fn solution_satisfies_transcription_invariants() {
        let params = ActuatorParams::default();
        let config = CollocationConfig::default();
        let (ocp, sol) = solve_plan(vec![Mode::Brk, Mode::Sea], 0.5, &params, &config);
        assert!(sol.status.is_success(), "{:?}", sol.status);
        assert!((sol.final_time() - 0.5).abs() < 1e-9);
        assert!(sol.durations().iter().all(|&t| t > 0.0));
        assert_eq!(sol.objective, -sol.phases[1].states.last().unwrap()[4]);

        // reset linkage
        let last = sol.phases[0].states.last().unwrap();
        let first = sol.phases[1].states[0];
        let r = ocp.reset_map(1);
        let v = r * nalgebra::Vector2::new(last[3], last[4]);
        let linked = [last[0], last[1], last[2], v[0], v[1]];
        for c in 0..5 {
            assert!((first[c] - linked[c]).abs() < 1e-8);
        }

        // trapezoid defects from the simulation model's vector field
        let model = Model::new(params, SpringLaw::Linear).unwrap();
        let f = |mode: Mode, s: &[f64; 5], u: f64| {
            let st = HybridState {
                theta: s[0],
                psi: s[1],
                q: s[2],
                psi_dot: s[3],
                q_dot: s[4],
                h: 0.0,
            };
            model.derivative(mode, &st, u, true)
        };
        let mut worst = 0.0f64;
        for ph in &sol.phases {
            let h = ph.duration / config.segments_per_phase as f64;
            for k in 0..config.segments_per_phase {
                let (a, b) = (&ph.states[k], &ph.states[k + 1]);
                let fa = f(ph.mode, a, ph.controls[k]);
                let fb = f(ph.mode, b, ph.controls[k + 1]);
                for c in 0..5 {
                    worst = worst.max((b[c] - a[c] - 0.5 * h * (fa[c] + fb[c])).abs());
                }
            }
        }
        assert!(worst < 10.0 * config.kkt_tol, "defect {worst}");
        assert!(ocp.defect_residuals(&sol.x).iter().all(|d| d.abs() < 10.0 * config.kkt_tol));

        // path bounds
        for ph in &sol.phases {
            for (s, u) in ph.states.iter().zip(&ph.controls) {
                assert!(s[0].abs() <= params.theta_range + 1e-9);
                assert!((s[0] - s[1]).abs() <= params.phi_max + 1e-6);
                assert!(u.abs() <= params.u_max + 1e-9);
            }
        }

        let replay = reconstruct(&sol, &params, &SimOptions::default()).unwrap();
        assert!(replay.gap < 0.5, "gap {}", replay.gap);
    }

    #[test]
    fn objective_scaling_leaves_optimum_unchanged() {
        let params = ActuatorParams::default();
        let base = CollocationConfig {
            starts: 1,
            ..CollocationConfig::default()
        };
        let (_, a) = solve_plan(vec![Mode::Sea], 0.4, &params, &base);
        let scaled = CollocationConfig {
            objective_scale: 25.0,
            ..base
        };
        let (_, b) = solve_plan(vec![Mode::Sea], 0.4, &params, &scaled);
        assert!(a.status.is_success() && b.status.is_success());
        assert!((a.final_q_dot() - b.final_q_dot()).abs() < 1e-4, "{} vs {}", a.final_q_dot(), b.final_q_dot());
    }

    #[test]
    fn hermite_simpson_agrees_with_trapezoid() {
        let params = ActuatorParams::default();
        let trap = CollocationConfig {
            starts: 2,
            ..CollocationConfig::default()
        };
        let hs = CollocationConfig {
            scheme: Scheme::HermiteSimpson,
            ..trap.clone()
        };
        let (_, a) = solve_plan(vec![Mode::Sea], 0.4, &params, &trap);
        let (ocp, b) = solve_plan(vec![Mode::Sea], 0.4, &params, &hs);
        assert!(b.status.is_success(), "{:?}", b.status);
        assert_eq!(ocp.num_vars(), 6 * 51);
        assert!((a.final_q_dot() - b.final_q_dot()).abs() < 0.1);
    }

    #[test]
    fn infeasible_terminal_condition_is_reported() {
        let params = ActuatorParams {
            phi_max: 0.0,
            ..ActuatorParams::default()
        };
        let boundary = Boundary {
            terminal: vec![crate::trajopt::TerminalBound {
                component: crate::trajopt::component::Q_DOT,
                lo: 1.0,
                hi: f64::INFINITY,
            }],
            ..Boundary::from_rest(0.0)
        };
        let ocp = build_ocp(
            &PhasePlan::fixed(vec![Mode::Brk, Mode::Sea], 1.0),
            &params,
            &CollocationConfig {
                starts: 2,
                max_iter: 500,
                ..CollocationConfig::default()
            },
            &boundary,
        )
        .unwrap();
        let sol = solve(&ocp);
        assert!(!sol.status.is_success(), "{:?}", sol.status);
    }

    #[test]
    fn falling_direction_maximizes_negative_velocity() {
        let params = ActuatorParams::default();
        let q0 = 30f64.to_radians();
        let ocp = build_ocp(
            &PhasePlan::free(vec![Mode::Sea], 0.0, 0.3),
            &params,
            &CollocationConfig {
                starts: 2,
                ..CollocationConfig::default()
            },
            &Boundary::falling_from(q0),
        )
        .unwrap();
        let sol = solve(&ocp);
        assert!(sol.status.is_success());
        assert!(sol.final_q_dot() < 0.0);
        assert_eq!(sol.final_speed(), -sol.final_q_dot());
        assert!(sol.final_speed() > 0.5);
    }
}
