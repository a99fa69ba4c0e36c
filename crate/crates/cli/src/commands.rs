use std::path::{Path, PathBuf};

use bsa_core::experiments::{local_maxima, run_sweep, SweepKind, SweepResult, SweepSpec};
use bsa_core::identify::{
    estimate_delay, fit_bouc_wen, fit_stiffness, generate_cycles, synthetic_delay_log, DelayLog, FitOptions,
    LoadingCycleData, StiffnessFit,
};
use bsa_core::io::{self, Manifest};
use bsa_core::sim::{execute_schedule, PhaseSpec};
use bsa_core::trajopt::{build_ocp, reconstruct, solve, Boundary, PhasePlan, Solution};
use bsa_core::{ActuatorParams, ControlSignal, HybridTrajectory, Schedule, SimOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ControlEntry, RunConfig};
use crate::exit::Failure;

/// Everything a command needs after flags and files are merged.
pub struct Context {
    pub cfg: RunConfig,
    pub params: ActuatorParams,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Effective<'a> {
    params: &'a ActuatorParams,
    run: &'a RunConfig,
}

impl Context {
    fn manifest(&self, command: &str) -> Result<Manifest, Failure> {
        Ok(Manifest::new(
            command,
            self.cfg.seed,
            &Effective {
                params: &self.params,
                run: &self.cfg,
            },
        )?)
    }

    fn sim_options(&self) -> SimOptions {
        self.cfg.fidelity.sim_options()
    }

    fn write_trajectory(&self, manifest: &mut Manifest, stem: &str, traj: &HybridTrajectory) -> Result<(), Failure> {
        let traj_name = format!("{stem}.csv");
        let events_name = format!("{stem}_events.csv");
        write_trajectory_files(&self.out, &traj_name, &events_name, traj, &self.params, self.cfg.fidelity.law())?;
        manifest.files.push(traj_name);
        manifest.files.push(events_name);
        Ok(())
    }

    fn finish(&self, manifest: &Manifest) -> Result<(), Failure> {
        manifest.write(&self.out)?;
        Ok(())
    }
}

fn write_trajectory_files(
    dir: &Path,
    traj_name: &str,
    events_name: &str,
    traj: &HybridTrajectory,
    params: &ActuatorParams,
    law: bsa_core::SpringLaw,
) -> Result<(), Failure> {
    io::write_trajectory_csv(io::create(&dir.join(traj_name))?, traj, params, law)?;
    io::write_events_csv(io::create(&dir.join(events_name))?, traj)?;
    Ok(())
}

fn build_control(entry: &ControlEntry) -> Result<ControlSignal, Failure> {
    match (entry.file.as_ref(), entry.times.as_ref(), entry.values.as_ref()) {
        (Some(path), None, None) => {
            let mut rdr = csv::Reader::from_path(path)
                .map_err(|e| Failure::config(format!("control file {}: {e}", path.display())))?;
            let (mut t, mut u) = (Vec::new(), Vec::new());
            for row in rdr.deserialize::<(f64, f64)>() {
                let (a, b) = row.map_err(|e| Failure::config(format!("control file {}: {e}", path.display())))?;
                t.push(a);
                u.push(b);
            }
            Ok(ControlSignal::piecewise_linear(t, u)?)
        }
        (None, Some(t), Some(u)) => Ok(ControlSignal::piecewise_linear(t.clone(), u.clone())?),
        (None, None, None) => Ok(ControlSignal::constant(entry.constant.unwrap_or(0.0))),
        _ => Err(Failure::config("control: give either `file`, or `times` and `values`, or `constant`")),
    }
}

pub fn simulate(ctx: &Context) -> Result<(), Failure> {
    let sec = &ctx.cfg.simulate;
    let phases = sec
        .phases
        .iter()
        .map(|p| PhaseSpec {
            mode: p.mode,
            duration: p.duration,
        })
        .collect();
    let schedule = Schedule::new(phases, build_control(&sec.control)?);
    schedule.validate()?;
    let traj = execute_schedule(&schedule, &sec.initial.state()?, &ctx.params, &ctx.sim_options())?;
    let mut manifest = ctx.manifest("simulate")?;
    ctx.write_trajectory(&mut manifest, "trajectory", &traj)?;
    let last = traj.final_state();
    manifest.record("final_time", traj.final_sample().t)?;
    manifest.record("final_q_dot", last.q_dot)?;
    manifest.record("events", traj.events.len())?;
    ctx.finish(&manifest)
}

fn record_solution(manifest: &mut Manifest, sol: &Solution) -> Result<(), Failure> {
    let modes: Vec<&str> = sol.phases.iter().map(|p| p.mode.name()).collect();
    manifest.record("plan", modes)?;
    manifest.record("status", sol.status)?;
    manifest.record("objective", sol.objective)?;
    manifest.record("final_speed", sol.final_speed())?;
    manifest.record("durations", sol.durations())?;
    manifest.record("final_time", sol.final_time())?;
    manifest.record("iterations", sol.iterations)?;
    manifest.record("constraint_violation", sol.constraint_violation)?;
    let starts: Vec<String> = sol.starts.iter().map(|s| format!("{:?}", s.status)).collect();
    manifest.record("start_status", starts)?;
    Ok(())
}

pub fn optimize(ctx: &Context) -> Result<(), Failure> {
    let sec = &ctx.cfg.optimize;
    let plan = match sec.final_time_range {
        Some([lo, hi]) => PhasePlan::free(sec.modes.clone(), lo, hi),
        None => PhasePlan::fixed(sec.modes.clone(), sec.final_time),
    };
    let q0 = sec.q0.radians()?;
    let mut boundary = if sec.fall_direction {
        Boundary::falling_from(q0)
    } else {
        Boundary::from_rest(q0)
    };
    boundary.terminal = sec.terminal.iter().map(|t| t.bound()).collect::<Result<_, _>>()?;
    let mut collocation = ctx.cfg.collocation.clone();
    collocation.seed = ctx.cfg.seed;
    let ocp = build_ocp(&plan, &ctx.params, &collocation, &boundary)?;
    let sol = solve(&ocp);

    let mut manifest = ctx.manifest("optimize")?;
    record_solution(&mut manifest, &sol)?;
    io::write_solution_nodes_csv(io::create(&ctx.out.join("solution.csv"))?, &sol)?;
    manifest.files.push("solution.csv".into());
    if !sol.status.is_success() {
        ctx.finish(&manifest)?;
        return Err(Failure::solver(format!(
            "optimizer failed ({:?}, constraint violation {:.3e})",
            sol.status, sol.constraint_violation
        )));
    }
    let replay = reconstruct(&sol, &ctx.params, &ctx.sim_options())?;
    ctx.write_trajectory(&mut manifest, "trajectory", &replay.trajectory)?;
    manifest.record("replay_final_speed", replay.final_speed)?;
    manifest.record("replay_gap", replay.gap)?;
    ctx.finish(&manifest)
}

pub fn sweep(ctx: &Context, kind: SweepKind) -> Result<(), Failure> {
    let sec = &ctx.cfg.sweep;
    let mut spec = match kind {
        SweepKind::FinalTime => SweepSpec::final_time(),
        SweepKind::InitialAngle => SweepSpec::initial_angle(),
    };
    match kind {
        SweepKind::FinalTime => {
            if let Some(g) = &sec.final_times {
                spec.grid = g.clone();
            }
        }
        SweepKind::InitialAngle => {
            if let Some(g) = &sec.initial_angles {
                spec.grid = g.iter().map(|a| a.radians()).collect::<Result<_, _>>()?;
            }
        }
    }
    if let Some(p) = &sec.plans {
        spec.plans = p.clone();
    }
    spec.repetitions = sec.repetitions.unwrap_or(spec.repetitions);
    spec.perturbation = sec.perturbation.unwrap_or(spec.perturbation);
    spec.fit_degree = sec.fit_degree.unwrap_or(spec.fit_degree).min(spec.grid.len().saturating_sub(1));
    spec.max_final_time = sec.max_final_time.unwrap_or(spec.max_final_time);
    spec.full_fidelity = sec.full_fidelity.unwrap_or(spec.full_fidelity);
    spec.seed = ctx.cfg.seed;
    spec.collocation = ctx.cfg.collocation.clone();
    spec.collocation.seed = ctx.cfg.seed;
    spec.replay = ctx.sim_options();

    let result = run_sweep(&spec, &ctx.params)?;
    let name = match kind {
        SweepKind::FinalTime => "sweep-tf",
        SweepKind::InitialAngle => "sweep-q0",
    };
    let mut manifest = ctx.manifest(name)?;
    write_sweep(ctx, &mut manifest, &result)?;
    ctx.finish(&manifest)?;

    let failed = result.failures();
    if failed == 0 {
        Ok(())
    } else if failed == result.runs.len() {
        Err(Failure::solver("every run of the sweep failed; see runs.csv"))
    } else {
        Err(Failure::partial(format!(
            "{failed} of {} runs failed; see runs.csv",
            result.runs.len()
        )))
    }
}

fn write_sweep(ctx: &Context, manifest: &mut Manifest, result: &SweepResult) -> Result<(), Failure> {
    io::write_summary_csv(io::create(&ctx.out.join("summary.csv"))?, result)?;
    io::write_runs_csv(io::create(&ctx.out.join("runs.csv"))?, result)?;
    manifest.files.push("summary.csv".into());
    manifest.files.push("runs.csv".into());
    // each run owns its pair of files
    let names: Vec<(String, String)> = result
        .runs
        .par_iter()
        .filter_map(|r| r.trajectory.as_ref().map(|t| (r, t)))
        .map(|(r, traj)| {
            let stem = format!("points/{}_{:02}", r.plan, r.grid_index);
            let (a, b) = (format!("{stem}.csv"), format!("{stem}_events.csv"));
            write_trajectory_files(&ctx.out, &a, &b, traj, &ctx.params, ctx.cfg.fidelity.law()).map(|_| (a, b))
        })
        .collect::<Result<_, _>>()?;
    for (a, b) in names {
        manifest.files.push(a);
        manifest.files.push(b);
    }
    manifest.record("grid", &result.grid)?;
    manifest.record("failures", result.failures())?;
    let mut fits = toml::Table::new();
    for f in &result.fits {
        if let Some(c) = &f.coefficients {
            fits.insert(f.plan.clone(), toml::Value::try_from(c).expect("floats serialize"));
        }
    }
    manifest.record("fit_coefficients", fits)?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    source: String,
    theta_dot_set: Option<f64>,
    samples: usize,
    stiffness_linear: f64,
    stiffness: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    rss: f64,
    rss_linear: f64,
    converged: bool,
    loop_work: f64,
}

#[derive(Serialize)]
struct DelayReport {
    source: String,
    threshold: f64,
    delay: f64,
    edges: usize,
}

#[derive(Serialize)]
struct IdentifyReport {
    fits: Vec<FitReport>,
    delay: DelayReport,
}

pub fn identify(ctx: &Context) -> Result<(), Failure> {
    let sec = &ctx.cfg.identify;
    let mut manifest = ctx.manifest("identify")?;
    let mut datasets: Vec<(String, LoadingCycleData)> = Vec::new();
    if sec.data.is_empty() {
        for &rate in &sec.set_points {
            let d = generate_cycles(
                &ctx.params,
                rate,
                (sec.theta_limits[0], sec.theta_limits[1]),
                sec.cycles,
                ctx.cfg.fidelity.dt,
            )?;
            let name = format!("cycles_{rate}.csv");
            d.to_csv(io::create(&ctx.out.join(&name))?)?;
            manifest.files.push(name.clone());
            datasets.push((name, d));
        }
    } else {
        for path in &sec.data {
            let file = std::fs::File::open(path)
                .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
            datasets.push((path.display().to_string(), LoadingCycleData::from_csv(file)?));
        }
    }
    let opts = FitOptions {
        form: ctx.params.hysteresis_form,
        ..FitOptions::default()
    };
    let stiffness = if sec.fit_stiffness {
        StiffnessFit::Free
    } else {
        StiffnessFit::Fixed(ctx.params.stiffness)
    };
    let fits: Vec<FitReport> = datasets
        .par_iter()
        .map(|(name, d)| -> Result<FitReport, Failure> {
            let k_lin = fit_stiffness(d)?;
            let bw = fit_bouc_wen(d, stiffness, &opts)?;
            Ok(FitReport {
                source: name.clone(),
                theta_dot_set: d.theta_dot_set,
                samples: d.len(),
                stiffness_linear: k_lin,
                stiffness: bw.stiffness,
                alpha: bw.alpha,
                beta: bw.beta,
                gamma: bw.gamma,
                rss: bw.rss,
                rss_linear: bw.rss_linear,
                converged: bw.converged,
                loop_work: d.loop_work(),
            })
        })
        .collect::<Result<_, _>>()?;

    let (source, log) = match &sec.delay_log {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
            (path.display().to_string(), DelayLog::from_csv(file)?)
        }
        None => {
            let opts = SimOptions {
                delays: true,
                ..ctx.sim_options()
            };
            let log = synthetic_delay_log(&ctx.params, &opts, 0.1, 0.3)?;
            log.to_csv(io::create(&ctx.out.join("delay_log.csv"))?)?;
            manifest.files.push("delay_log.csv".into());
            ("delay_log.csv".to_string(), log)
        }
    };
    let delay = DelayReport {
        delay: estimate_delay(&log, sec.threshold)?,
        edges: log.edges().len(),
        threshold: sec.threshold,
        source,
    };
    let report = IdentifyReport { fits, delay };
    let text = toml::to_string(&report).map_err(|e| Failure::config(e.to_string()))?;
    std::fs::write(ctx.out.join("report.toml"), text)?;
    manifest.files.push("report.toml".into());
    let unconverged = report.fits.iter().filter(|f| !f.converged).count();
    manifest.record("unconverged_fits", unconverged)?;
    ctx.finish(&manifest)?;
    if unconverged > 0 {
        return Err(Failure::partial(format!("{unconverged} hysteresis fits did not converge")));
    }
    Ok(())
}

pub fn energy(ctx: &Context) -> Result<(), Failure> {
    let sec = &ctx.cfg.energy;
    let mut collocation = ctx.cfg.collocation.clone();
    collocation.seed = ctx.cfg.seed;
    let mut jobs = Vec::new();
    for &tf in &sec.final_times {
        for plan in &sec.plans {
            jobs.push((tf, plan));
        }
    }
    let opts = ctx.sim_options();
    let outcomes: Vec<Result<(String, f64, usize, Option<HybridTrajectory>), Failure>> = jobs
        .par_iter()
        .map(|&(tf, plan)| {
            let stem = format!("{}_tf{tf}", plan.name);
            let ocp = build_ocp(
                &PhasePlan::fixed(plan.modes.clone(), tf),
                &ctx.params,
                &collocation,
                &Boundary::from_rest(0.0),
            )?;
            let sol = solve(&ocp);
            if !sol.status.is_success() {
                return Ok((stem, f64::NAN, 0, None));
            }
            let replay = reconstruct(&sol, &ctx.params, &opts)?;
            let ep: Vec<f64> = bsa_core::experiments::energy_trace(&replay.trajectory, &ctx.params)
                .iter()
                .map(|e| e.potential)
                .collect();
            let top = ep.iter().fold(0.0f64, |m, v| m.max(*v));
            let peaks = local_maxima(&ep, 0.05 * top).len();
            Ok((stem, replay.final_speed, peaks, Some(replay.trajectory)))
        })
        .collect();
    let mut manifest = ctx.manifest("energy")?;
    let mut failed = 0;
    let mut table = toml::Table::new();
    for outcome in outcomes {
        let (stem, speed, peaks, traj) = outcome?;
        let Some(traj) = traj else {
            failed += 1;
            continue;
        };
        let name = format!("energy_{stem}.csv");
        io::write_energy_csv(io::create(&ctx.out.join(&name))?, &traj, &ctx.params)?;
        manifest.files.push(name);
        ctx.write_trajectory(&mut manifest, &format!("trajectory_{stem}"), &traj)?;
        let mut row = toml::Table::new();
        row.insert("final_speed".into(), speed.into());
        row.insert("potential_peaks".into(), (peaks as i64).into());
        table.insert(stem, row.into());
    }
    manifest.record("runs", table)?;
    manifest.record("failures", failed)?;
    ctx.finish(&manifest)?;
    match failed {
        0 => Ok(()),
        n if n == jobs.len() => Err(Failure::solver("every optimization failed")),
        n => Err(Failure::partial(format!("{n} of {} optimizations failed", jobs.len()))),
    }
}
