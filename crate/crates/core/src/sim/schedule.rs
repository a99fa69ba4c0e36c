//! Fixed-step integration of single phases and execution of mode schedules.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::control::ControlSignal;
use super::dynamics::Model;
use crate::error::{Error, Result};
use crate::model::{ActuatorParams, HybridState, Mode, SpringLaw};

pub const DEFAULT_DT: f64 = 1e-4;

/// One commanded mode and how long it is held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub mode: Mode,
    pub duration: f64,
}

/// Externally commanded switching signal and motor command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub phases: Vec<PhaseSpec>,
    pub control: ControlSignal,
}

impl Schedule {
    pub fn new(phases: Vec<PhaseSpec>, control: ControlSignal) -> Schedule {
        Schedule { phases, control }
    }

    pub fn single(mode: Mode, duration: f64, control: ControlSignal) -> Schedule {
        Schedule::new(vec![PhaseSpec { mode, duration }], control)
    }

    pub fn total_duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidSchedule("no phases".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.duration.is_finite() && p.duration >= 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "phase {i} ({}) has invalid duration {}",
                    p.mode, p.duration
                )));
            }
        }
        Ok(())
    }

    /// Phases in which the switches take physical effect after the clutch
    /// delays. Brake and clutch bits are delayed independently, so a switch
    /// flipping both passes briefly through an intermediate mode. The
    /// result covers the same total duration.
    pub fn delayed(&self, delay_brake: f64, delay_clutch: f64) -> Vec<PhaseSpec> {
        let total = self.total_duration();
        let first = match self.phases.first() {
            Some(p) => p.mode,
            None => return Vec::new(),
        };
        // (time, is_brake, new value)
        let mut edges: Vec<(f64, bool, bool)> = Vec::new();
        let mut t = 0.0;
        let mut prev = first;
        for p in &self.phases {
            if p.mode.brake_engaged() != prev.brake_engaged() {
                edges.push((t + delay_brake, true, p.mode.brake_engaged()));
            }
            if p.mode.clutch_engaged() != prev.clutch_engaged() {
                edges.push((t + delay_clutch, false, p.mode.clutch_engaged()));
            }
            prev = p.mode;
            t += p.duration;
        }
        edges.sort_by(|a, b| a.0.total_cmp(&b.0));

        let (mut brake, mut clutch) = (first.brake_engaged(), first.clutch_engaged());
        let mut out: Vec<PhaseSpec> = Vec::new();
        let mut start = 0.0;
        let mut i = 0;
        while i < edges.len() && edges[i].0 < total {
            let te = edges[i].0;
            push_phase(&mut out, Mode::from_clutches(brake, clutch), te - start);
            while i < edges.len() && edges[i].0 == te {
                if edges[i].1 {
                    brake = edges[i].2;
                } else {
                    clutch = edges[i].2;
                }
                i += 1;
            }
            start = te;
        }
        push_phase(&mut out, Mode::from_clutches(brake, clutch), total - start);
        out
    }
}

fn push_phase(out: &mut Vec<PhaseSpec>, mode: Mode, duration: f64) {
    match out.last_mut() {
        Some(last) if last.mode == mode => last.duration += duration,
        _ if duration > 0.0 => out.push(PhaseSpec { mode, duration }),
        _ => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub law: SpringLaw,
    /// Apply brake/clutch engagement delays to commanded switches.
    pub delays: bool,
    /// Use `tanh` Coulomb friction instead of the exact law with stiction.
    pub smoothed: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: DEFAULT_DT,
            law: SpringLaw::Linear,
            delays: false,
            smoothed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: HybridState,
    pub mode: Mode,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: Mode,
    pub to: Mode,
    /// Contact impulse, one entry per constraint row of `to`.
    pub impulse: Vec<f64>,
    pub before: HybridState,
    pub after: HybridState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTrajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<SwitchEvent>,
    pub dt: f64,
}

impl HybridTrajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory holds at least the initial state")
    }

    pub fn final_state(&self) -> HybridState {
        self.final_sample().state
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }
}

fn axpy(a: &[f64; 6], k: f64, d: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| a[i] + k * d[i])
}

/// Integrates one phase with classical fixed-step RK4.
///
/// Returns samples from `t0` to exactly `t0 + duration`; the last step is
/// shortened when `duration` is not a multiple of `dt`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_phase(
    model: &Model,
    mode: Mode,
    state0: &HybridState,
    control: &ControlSignal,
    t0: f64,
    duration: f64,
    dt: f64,
    smoothed: bool,
) -> Result<Vec<Sample>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidInput(format!("phase duration must be > 0, got {duration}")));
    }
    let t_end = t0 + duration;
    let steps = ((duration / dt) - 1e-9).ceil().max(1.0) as usize;
    let u_at = |t: f64| control.within(t, t0, t_end);
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = state0.to_array();
    out.push(Sample {
        t: t0,
        state: *state0,
        mode,
        u: u_at(t0),
    });
    let f = |t: f64, x: &[f64; 6]| model.derivative(mode, &HybridState::from_array(*x), u_at(t), smoothed);
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let (t_next, h) = if k + 1 == steps { (t_end, t_end - t) } else { (t0 + (k + 1) as f64 * dt, dt) };
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &axpy(&x, 0.5 * h, &k1));
        let k3 = f(t + 0.5 * h, &axpy(&x, 0.5 * h, &k2));
        let k4 = f(t_next, &axpy(&x, h, &k3));
        for i in 0..6 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let state = HybridState::from_array(x);
        if !state.is_finite() {
            return Err(Error::NonFiniteState { t: t_next, mode });
        }
        out.push(Sample {
            t: t_next,
            state,
            mode,
            u: u_at(t_next),
        });
    }
    Ok(out)
}

/// Runs a switched-impulsive trajectory: integrate each phase, apply the
/// reset map at every switch.
///
/// The initial state is first projected onto the constraints of the first
/// mode. Zero-duration phases still apply their reset.
pub fn execute_schedule(
    schedule: &Schedule,
    state0: &HybridState,
    params: &ActuatorParams,
    opts: &SimOptions,
) -> Result<HybridTrajectory> {
    schedule.validate()?;
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be > 0, got {}", opts.dt)));
    }
    if !state0.is_finite() {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }
    let model = Model::new(*params, opts.law)?;
    let phases = if opts.delays {
        schedule.delayed(params.delay_brake, params.delay_clutch)
    } else {
        schedule.phases.clone()
    };

    let first = phases[0].mode;
    let (mut state, _) = model.reset(first, state0);
    let mut samples = vec![Sample {
        t: 0.0,
        state,
        mode: first,
        u: schedule.control.right(0.0),
    }];
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut current = first;
    for phase in &phases {
        if phase.mode != current {
            let (after, impulse) = model.reset(phase.mode, &state);
            events.push(SwitchEvent {
                t,
                from: current,
                to: phase.mode,
                impulse: impulse.iter().copied().collect(),
                before: state,
                after,
            });
            state = after;
            current = phase.mode;
        }
        if phase.duration <= 0.0 {
            continue;
        }
        let seg = integrate_phase(
            &model,
            phase.mode,
            &state,
            &schedule.control,
            t,
            phase.duration,
            opts.dt,
            opts.smoothed,
        )?;
        t += phase.duration;
        state = seg.last().expect("segment has samples").state;
        samples.extend(seg.into_iter().skip(1));
    }
    Ok(HybridTrajectory {
        samples,
        events,
        dt: opts.dt,
    })
}

/// `C xi_dot` after each event, for auditing.
pub fn event_constraint_residuals(traj: &HybridTrajectory) -> Vec<f64> {
    traj.events
        .iter()
        .map(|e| {
            let c = crate::model::constraint_matrix(e.to);
            let r = c * DVector::from_column_slice(e.after.xi_dot().as_slice());
            r.amax()
        })
        .collect()
}
