//! Multi-phase direct collocation for maximum-velocity motions with a fixed
//! mode sequence.

mod guess;
mod solve;
mod transcription;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HybridState, Mode};

pub use solve::{reconstruct, solve, PhaseTrajectory, Replay, Solution, StartRecord};
pub use transcription::{build_ocp, OcpProblem, OCP_STATE_DIM};

/// Shortest phase the transcription allows, s.
pub const MIN_PHASE_DURATION: f64 = 0.02;

/// Indices into the OCP state `[theta, psi, q, psi_dot, q_dot]`.
pub mod component {
    pub const THETA: usize = 0;
    pub const PSI: usize = 1;
    pub const Q: usize = 2;
    pub const PSI_DOT: usize = 3;
    pub const Q_DOT: usize = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalTime {
    Fixed(f64),
    Free { lo: f64, hi: f64 },
}

impl FinalTime {
    pub fn upper(self) -> f64 {
        match self {
            FinalTime::Fixed(t) => t,
            FinalTime::Free { hi, .. } => hi,
        }
    }
}

/// Ordered mode sequence with per-phase duration bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub modes: Vec<Mode>,
    pub duration_bounds: Vec<(f64, f64)>,
    pub final_time: FinalTime,
}

impl PhasePlan {
    /// Plan whose phases may each last between [`MIN_PHASE_DURATION`] and
    /// the largest admissible final time.
    pub fn new(modes: Vec<Mode>, final_time: FinalTime) -> PhasePlan {
        let hi = final_time.upper();
        let duration_bounds = vec![(MIN_PHASE_DURATION, hi); modes.len()];
        PhasePlan {
            modes,
            duration_bounds,
            final_time,
        }
    }

    pub fn fixed(modes: Vec<Mode>, t_f: f64) -> PhasePlan {
        PhasePlan::new(modes, FinalTime::Fixed(t_f))
    }

    pub fn free(modes: Vec<Mode>, lo: f64, hi: f64) -> PhasePlan {
        PhasePlan::new(modes, FinalTime::Free { lo, hi })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPlan(msg));
        if self.modes.is_empty() {
            return bad("plan has no phases".into());
        }
        if self.duration_bounds.len() != self.modes.len() {
            return bad(format!(
                "{} duration bounds for {} phases",
                self.duration_bounds.len(),
                self.modes.len()
            ));
        }
        for (i, &(lo, hi)) in self.duration_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return bad(format!("phase {i} duration bounds ({lo}, {hi}) are inconsistent"));
            }
        }
        let min_sum: f64 = self.duration_bounds.iter().map(|b| b.0).sum();
        let max_sum: f64 = self.duration_bounds.iter().map(|b| b.1).sum();
        let (lo, hi) = match self.final_time {
            FinalTime::Fixed(t) => (t, t),
            FinalTime::Free { lo, hi } => (lo, hi),
        };
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi && hi > 0.0) {
            return bad(format!("final time bounds ({lo}, {hi}) are inconsistent"));
        }
        if min_sum > hi * (1.0 + 1e-12) || max_sum < lo * (1.0 - 1e-12) {
            return bad(format!(
                "phase durations in [{min_sum}, {max_sum}] cannot meet final time in [{lo}, {hi}]"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Trapezoidal,
    HermiteSimpson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollocationConfig {
    pub segments_per_phase: usize,
    pub scheme: Scheme,
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Number of initial guesses; the best converged one is kept.
    pub starts: usize,
    pub seed: u64,
    /// Positive factor applied to the objective.
    pub objective_scale: f64,
}

impl Default for CollocationConfig {
    fn default() -> Self {
        CollocationConfig {
            segments_per_phase: 25,
            scheme: Scheme::Trapezoidal,
            kkt_tol: 1e-6,
            max_iter: 3000,
            starts: 5,
            seed: 0,
            objective_scale: 1.0,
        }
    }
}

impl CollocationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments_per_phase < 2 {
            return Err(Error::param("segments_per_phase", "must be at least 2"));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::param("kkt_tol", "must be positive"));
        }
        if self.starts == 0 {
            return Err(Error::param("starts", "must be at least 1"));
        }
        if !(self.objective_scale.is_finite() && self.objective_scale > 0.0) {
            return Err(Error::param("objective_scale", "must be positive"));
        }
        Ok(())
    }
}

/// Bounds on one component of the final OCP state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalBound {
    pub component: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Sign of the link velocity being maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }

    /// Direction in which gravity accelerates a link released at rest from `q0`.
    pub fn of_fall(q0: f64) -> Direction {
        if q0 > 0.0 {
            Direction::Negative
        } else {
            Direction::Positive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Boundary {
    pub initial: HybridState,
    pub terminal: Vec<TerminalBound>,
    #[serde(default)]
    pub direction: Direction,
}

impl Boundary {
    pub fn from_rest(q0: f64) -> Boundary {
        Boundary {
            initial: HybridState::at_rest(0.0, 0.0, q0),
            terminal: Vec::new(),
            direction: Direction::Positive,
        }
    }

    /// Rest at `q0`, maximizing speed in the direction the link falls.
    pub fn falling_from(q0: f64) -> Boundary {
        Boundary {
            direction: Direction::of_fall(q0),
            ..Boundary::from_rest(q0)
        }
    }
}
