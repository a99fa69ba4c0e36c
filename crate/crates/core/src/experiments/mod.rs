//! Velocity-maximization sweeps comparing a braked-start plan against a
//! plain series-elastic plan.

mod energy;
mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActuatorParams, Mode, SpringLaw};
use crate::nlp::SolveStatus;
use crate::sim::{HybridTrajectory, SimOptions};
use crate::trajopt::{build_ocp, reconstruct, solve, Boundary, CollocationConfig, PhasePlan};

pub use energy::{energy_trace, local_maxima, EnergySample};
pub use stats::{mean_std, polyfit, polyval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Grid of fixed final times, starting at rest with the link hanging.
    #[default]
    FinalTime,
    /// Grid of initial link angles (rad), free final time.
    InitialAngle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub name: String,
    pub modes: Vec<Mode>,
}

impl PlanSpec {
    pub fn new(name: &str, modes: &[Mode]) -> PlanSpec {
        PlanSpec {
            name: name.to_string(),
            modes: modes.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub kind: SweepKind,
    /// Final times (s) or initial angles (rad).
    pub grid: Vec<f64>,
    pub plans: Vec<PlanSpec>,
    /// Repetition 0 uses the nominal parameters, later ones perturbed copies.
    pub repetitions: usize,
    /// Relative standard deviation of the repetition noise.
    pub perturbation: f64,
    pub seed: u64,
    pub fit_degree: usize,
    /// Upper bound of the free final time in initial-angle sweeps, s.
    pub max_final_time: f64,
    pub collocation: CollocationConfig,
    /// Simulator settings of the reported replay.
    pub replay: SimOptions,
    /// Also replay with the hysteretic spring and clutch delays.
    pub full_fidelity: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec::final_time()
    }
}

impl SweepSpec {
    /// 0.25 to 1.0 s in steps of 0.05 s, [BRK, SEA] against [SEA].
    pub fn final_time() -> SweepSpec {
        SweepSpec {
            kind: SweepKind::FinalTime,
            grid: (0..16).map(|i| 0.25 + 0.05 * i as f64).collect(),
            plans: vec![PlanSpec::new("BSA", &[Mode::Brk, Mode::Sea]), PlanSpec::new("SEA", &[Mode::Sea])],
            repetitions: 1,
            perturbation: 0.02,
            seed: 0,
            fit_degree: 3,
            max_final_time: 0.5,
            collocation: CollocationConfig::default(),
            replay: SimOptions::default(),
            full_fidelity: true,
        }
    }

    /// 10 to 50 deg in steps of 10 deg, [STG, SEA] against [SEA], final time
    /// free up to 0.5 s.
    pub fn initial_angle() -> SweepSpec {
        SweepSpec {
            kind: SweepKind::InitialAngle,
            grid: (1..=5).map(|i| (10.0 * i as f64).to_radians()).collect(),
            plans: vec![PlanSpec::new("BSA", &[Mode::Stg, Mode::Sea]), PlanSpec::new("SEA", &[Mode::Sea])],
            ..SweepSpec::final_time()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::param("grid", "must not be empty"));
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::param("grid", "values must be finite"));
        }
        if self.plans.is_empty() || self.plans.iter().any(|p| p.modes.is_empty()) {
            return Err(Error::param("plans", "need at least one plan with at least one mode"));
        }
        if self.repetitions == 0 {
            return Err(Error::param("repetitions", "must be at least 1"));
        }
        if !(self.perturbation >= 0.0 && self.perturbation < 0.5) {
            return Err(Error::param("perturbation", "must lie in [0, 0.5)"));
        }
        if self.kind == SweepKind::InitialAngle && !(self.max_final_time > 0.0) {
            return Err(Error::param("max_final_time", "must be positive"));
        }
        if !(self.replay.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        self.collocation.validate()
    }

    /// Parameters of repetition `rep`; shared by all plans and grid points.
    pub fn repetition_params(&self, params: &ActuatorParams, rep: usize) -> ActuatorParams {
        if rep == 0 {
            return *params;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        params.perturbed(&mut rng, self.perturbation)
    }

    fn plan_and_boundary(&self, modes: &[Mode], value: f64) -> (PhasePlan, Boundary) {
        match self.kind {
            SweepKind::FinalTime => (PhasePlan::fixed(modes.to_vec(), value), Boundary::from_rest(0.0)),
            SweepKind::InitialAngle => (
                PhasePlan::free(modes.to_vec(), 0.0, self.max_final_time),
                Boundary::falling_from(value),
            ),
        }
    }
}

/// Outcome of one optimize-and-replay run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub grid_index: usize,
    pub grid_value: f64,
    pub plan: String,
    pub repetition: usize,
    /// `None` when the problem could not be built or replayed.
    pub solver: Option<SolveStatus>,
    pub error: Option<String>,
    pub iterations: usize,
    pub durations: Vec<f64>,
    /// Final link speed predicted by the optimizer, rad/s.
    pub ocp_speed: f64,
    /// Final link speed of the open-loop replay, rad/s.
    pub speed: f64,
    /// Replay speed with hysteresis and clutch delays, if requested.
    pub speed_full_fidelity: Option<f64>,
    /// Replay of repetition 0, kept for export.
    #[serde(skip)]
    pub trajectory: Option<HybridTrajectory>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.solver.is_some_and(SolveStatus::is_success)
    }

    fn failed(grid_index: usize, grid_value: f64, plan: &str, repetition: usize) -> RunRecord {
        RunRecord {
            grid_index,
            grid_value,
            plan: plan.to_string(),
            repetition,
            solver: None,
            error: None,
            iterations: 0,
            durations: Vec::new(),
            ocp_speed: f64::NAN,
            speed: f64::NAN,
            speed_full_fidelity: None,
            trajectory: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub grid_value: f64,
    pub plan: String,
    pub runs: usize,
    pub succeeded: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_full_fidelity: f64,
    pub std_full_fidelity: f64,
    /// `mean - fit(grid_value)`; NaN without a fit.
    pub fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFit {
    pub plan: String,
    /// Ascending powers of the grid value; `None` when too few points succeeded.
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub points: Vec<PointSummary>,
    pub fits: Vec<PlanFit>,
    pub runs: Vec<RunRecord>,
}

impl SweepResult {
    pub fn point(&self, grid_index: usize, plan: &str) -> Option<&PointSummary> {
        let value = *self.grid.get(grid_index)?;
        self.points.iter().find(|p| p.plan == plan && p.grid_value == value)
    }

    /// Mean speeds of `plan` along the grid.
    pub fn means(&self, plan: &str) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.point(i, plan).map_or(f64::NAN, |p| p.mean))
            .collect()
    }

    /// `mean(a) - mean(b)` along the grid.
    pub fn advantage(&self, a: &str, b: &str) -> Vec<f64> {
        self.means(a).iter().zip(self.means(b)).map(|(x, y)| x - y).collect()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| !r.ok()).count()
    }

    pub fn run(&self, grid_index: usize, plan: &str, repetition: usize) -> Option<&RunRecord> {
        self.runs
            .iter()
            .find(|r| r.grid_index == grid_index && r.plan == plan && r.repetition == repetition)
    }
}

pub fn run_final_time_sweep(spec: &SweepSpec, params: &ActuatorParams) -> Result<SweepResult> {
    if spec.kind != SweepKind::FinalTime {
        return Err(Error::InvalidInput("final-time sweep needs kind = final-time".into()));
    }
    if spec.grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::param("grid", "final times must be positive"));
    }
    run_sweep(spec, params)
}

pub fn run_initial_angle_sweep(spec: &SweepSpec, params: &ActuatorParams) -> Result<SweepResult> {
    if spec.kind != SweepKind::InitialAngle {
        return Err(Error::InvalidInput("initial-angle sweep needs kind = initial-angle".into()));
    }
    run_sweep(spec, params)
}

/// Solves and replays every (grid point, plan, repetition) in parallel.
/// Failed runs are recorded and left out of the statistics.
pub fn run_sweep(spec: &SweepSpec, params: &ActuatorParams) -> Result<SweepResult> {
    spec.validate()?;
    params.validate()?;
    let mut jobs = Vec::new();
    for rep in 0..spec.repetitions {
        for (gi, &value) in spec.grid.iter().enumerate() {
            for plan in &spec.plans {
                jobs.push((gi, value, plan, rep));
            }
        }
    }
    let runs: Vec<RunRecord> = jobs
        .into_par_iter()
        .map(|(gi, value, plan, rep)| {
            let p = spec.repetition_params(params, rep);
            run_one(spec, &p, plan, gi, value, rep)
        })
        .collect();
    summarize(spec.kind, &spec.grid, &spec.plans, runs, spec.fit_degree)
}

fn run_one(spec: &SweepSpec, params: &ActuatorParams, plan: &PlanSpec, gi: usize, value: f64, rep: usize) -> RunRecord {
    let mut record = RunRecord::failed(gi, value, &plan.name, rep);
    let (phase_plan, boundary) = spec.plan_and_boundary(&plan.modes, value);
    let ocp = match build_ocp(&phase_plan, params, &spec.collocation, &boundary) {
        Ok(ocp) => ocp,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let sol = solve(&ocp);
    record.solver = Some(sol.status);
    record.iterations = sol.iterations;
    record.durations = sol.durations();
    record.ocp_speed = sol.final_speed();
    match reconstruct(&sol, params, &spec.replay) {
        Ok(replay) => {
            record.speed = replay.final_speed;
            if rep == 0 {
                record.trajectory = Some(replay.trajectory);
            }
        }
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    }
    if spec.full_fidelity {
        let opts = SimOptions {
            law: SpringLaw::BoucWen,
            delays: true,
            ..spec.replay
        };
        match reconstruct(&sol, params, &opts) {
            Ok(replay) => record.speed_full_fidelity = Some(replay.final_speed),
            Err(e) => record.error = Some(format!("full-fidelity replay: {e}")),
        }
    }
    record
}

/// Groups `runs` by grid point and plan, and fits a polynomial of
/// `fit_degree` to each plan's means.
///
/// Fails when the degree cannot be determined by the grid; a plan whose
/// successful points are too few for the fit gets no coefficients.
pub fn summarize(
    kind: SweepKind,
    grid: &[f64],
    plans: &[PlanSpec],
    runs: Vec<RunRecord>,
    fit_degree: usize,
) -> Result<SweepResult> {
    if fit_degree >= grid.len() {
        return Err(Error::Degenerate(format!(
            "degree {fit_degree} fit needs more than {} grid points",
            grid.len()
        )));
    }
    let mut points = Vec::new();
    let mut fits = Vec::new();
    for plan in plans {
        let start = points.len();
        for (gi, &value) in grid.iter().enumerate() {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.grid_index == gi && r.plan == plan.name).collect();
            let ok: Vec<&RunRecord> = mine.iter().copied().filter(|r| r.ok()).collect();
            let speeds: Vec<f64> = ok.iter().map(|r| r.speed).collect();
            let full: Vec<f64> = ok.iter().filter_map(|r| r.speed_full_fidelity).collect();
            let (mean, std) = mean_std(&speeds);
            let (mean_full_fidelity, std_full_fidelity) = mean_std(&full);
            points.push(PointSummary {
                grid_value: value,
                plan: plan.name.clone(),
                runs: mine.len(),
                succeeded: ok.len(),
                mean,
                std,
                mean_full_fidelity,
                std_full_fidelity,
                fit_residual: f64::NAN,
            });
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = points[start..]
            .iter()
            .filter(|p| p.succeeded > 0)
            .map(|p| (p.grid_value, p.mean))
            .unzip();
        let coefficients = polyfit(&xs, &ys, fit_degree).ok();
        if let Some(c) = &coefficients {
            for p in points[start..].iter_mut().filter(|p| p.succeeded > 0) {
                p.fit_residual = p.mean - polyval(c, p.grid_value);
            }
        }
        fits.push(PlanFit {
            plan: plan.name.clone(),
            coefficients,
        });
    }
    Ok(SweepResult {
        kind,
        grid: grid.to_vec(),
        points,
        fits,
        runs,
    })
}
