//! CSV exports and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::experiments::{energy_trace, SweepResult};
use crate::model::{energy, spring_torque, ActuatorParams, SpringLaw};
use crate::sim::HybridTrajectory;
use crate::trajopt::Solution;

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    t: f64,
    mode: &'static str,
    theta: f64,
    psi: f64,
    q: f64,
    psi_dot: f64,
    q_dot: f64,
    h: f64,
    tau_s: f64,
    #[serde(rename = "E_k")]
    e_k: f64,
    #[serde(rename = "E_p")]
    e_p: f64,
}

pub fn write_trajectory_csv<W: std::io::Write>(
    writer: W,
    traj: &HybridTrajectory,
    params: &ActuatorParams,
    law: SpringLaw,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in &traj.samples {
        let x = &s.state;
        let e = energy(x, params);
        w.serialize(TrajectoryRow {
            t: s.t,
            mode: s.mode.name(),
            theta: x.theta,
            psi: x.psi,
            q: x.q,
            psi_dot: x.psi_dot,
            q_dot: x.q_dot,
            h: x.h,
            tau_s: spring_torque(x.theta, x.psi, x.h, law, params),
            e_k: e.kinetic,
            e_p: e.potential,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Switch events; impulse components beyond the mode's constraint count are
/// left empty.
pub fn write_events_csv<W: std::io::Write>(writer: W, traj: &HybridTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "from", "to", "Lambda_1", "Lambda_2"])?;
    for e in &traj.events {
        let lam = |i: usize| e.impulse.get(i).map_or(String::new(), |v| v.to_string());
        w.write_record([e.t.to_string(), e.from.name().into(), e.to.name().into(), lam(0), lam(1)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_energy_csv<W: std::io::Write>(writer: W, traj: &HybridTrajectory, params: &ActuatorParams) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "mode", "E_k", "E_p"])?;
    for e in energy_trace(traj, params) {
        w.write_record([e.t.to_string(), e.mode.name().into(), e.kinetic.to_string(), e.potential.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Optimizer nodes: `t, phase, mode, theta, psi, q, psi_dot, q_dot, u`.
pub fn write_solution_nodes_csv<W: std::io::Write>(writer: W, solution: &Solution) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "phase", "mode", "theta", "psi", "q", "psi_dot", "q_dot", "u"])?;
    for (i, ph) in solution.phases.iter().enumerate() {
        for ((t, x), u) in ph.times.iter().zip(&ph.states).zip(&ph.controls) {
            let mut rec = vec![t.to_string(), i.to_string(), ph.mode.name().to_string()];
            rec.extend(x.iter().map(f64::to_string));
            rec.push(u.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per grid point and plan.
pub fn write_summary_csv<W: std::io::Write>(writer: W, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "grid_value",
        "plan",
        "mean",
        "std",
        "fit_residual",
        "runs",
        "succeeded",
        "mean_full_fidelity",
        "std_full_fidelity",
    ])?;
    for p in &result.points {
        w.write_record([
            p.grid_value.to_string(),
            p.plan.clone(),
            p.mean.to_string(),
            p.std.to_string(),
            p.fit_residual.to_string(),
            p.runs.to_string(),
            p.succeeded.to_string(),
            p.mean_full_fidelity.to_string(),
            p.std_full_fidelity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per optimize-and-replay run, including failures.
pub fn write_runs_csv<W: std::io::Write>(writer: W, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "grid_value",
        "plan",
        "repetition",
        "status",
        "ocp_speed",
        "speed",
        "speed_full_fidelity",
        "durations",
        "iterations",
        "error",
    ])?;
    for r in &result.runs {
        let status = match (&r.error, r.solver) {
            (Some(_), _) => "error".to_string(),
            (None, Some(s)) => format!("{s:?}"),
            (None, None) => "error".to_string(),
        };
        let durations: Vec<String> = r.durations.iter().map(f64::to_string).collect();
        w.write_record([
            r.grid_value.to_string(),
            r.plan.clone(),
            r.repetition.to_string(),
            status,
            r.ocp_speed.to_string(),
            r.speed.to_string(),
            r.speed_full_fidelity.map_or(String::new(), |v| v.to_string()),
            durations.join(";"),
            r.iterations.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Hash of the effective configuration text below.
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<String>,
    /// Command-specific results (objective, status, durations, ...).
    pub results: toml::Table,
    /// Effective configuration, including the parameter set.
    pub config: toml::Table,
}

impl Manifest {
    /// `config` must serialize to a TOML table; the hash covers its text.
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Manifest> {
        let config = toml::Table::try_from(config).map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
        let text = toml::to_string(&config).map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
        Ok(Manifest {
            command: command.to_string(),
            config_hash: config_hash(&text),
            seed,
            files: Vec::new(),
            results: toml::Table::new(),
            config,
        })
    }

    pub fn record<T: Serialize>(&mut self, key: &str, value: T) -> Result<()> {
        let v = toml::Value::try_from(value).map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
        self.results.insert(key.to_string(), v);
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.toml");
        fs::write(&path, self.to_toml_string())?;
        Ok(path)
    }
}

/// Creates `path` and writes through a buffered writer.
pub fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HybridState, Mode};
    use crate::sim::{execute_schedule, ControlSignal, PhaseSpec, Schedule, SimOptions};

    fn traj(p: &ActuatorParams) -> HybridTrajectory {
        let sched = Schedule::new(
            vec![
                PhaseSpec { mode: Mode::Brk, duration: 0.05 },
                PhaseSpec { mode: Mode::Sea, duration: 0.05 },
                PhaseSpec { mode: Mode::Dec, duration: 0.01 },
            ],
            ControlSignal::constant(2.0),
        );
        execute_schedule(&sched, &HybridState::default(), p, &SimOptions { dt: 1e-3, ..SimOptions::default() }).unwrap()
    }

    #[test]
    fn trajectory_csv_has_the_declared_columns() {
        let p = ActuatorParams::default();
        let tr = traj(&p);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr, &p, SpringLaw::Linear).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,mode,theta,psi,q,psi_dot,q_dot,h,tau_s,E_k,E_p");
        assert_eq!(lines.count(), tr.samples.len());
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let last = rdr.records().last().unwrap().unwrap();
        assert_eq!(&last[1], "DEC");
        let x = tr.final_state();
        assert_eq!(last[9].parse::<f64>().unwrap(), energy(&x, &p).kinetic);
        assert_eq!(last[8].parse::<f64>().unwrap(), p.stiffness * x.phi());
    }

    #[test]
    fn events_csv_pads_missing_impulses() {
        let p = ActuatorParams::default();
        let tr = traj(&p);
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "t,from,to,Lambda_1,Lambda_2");
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("0.05,BRK,SEA,"));
        assert!(rows[2].ends_with(",,"), "{}", rows[2]);
    }

    #[test]
    fn manifest_hash_tracks_config() {
        #[derive(Serialize)]
        struct Cfg {
            dt: f64,
            name: String,
        }
        let a = Manifest::new("simulate", 0, &Cfg { dt: 1e-4, name: "x".into() }).unwrap();
        let b = Manifest::new("simulate", 0, &Cfg { dt: 1e-4, name: "x".into() }).unwrap();
        let c = Manifest::new("simulate", 0, &Cfg { dt: 2e-4, name: "x".into() }).unwrap();
        assert_eq!(a.to_toml_string(), b.to_toml_string());
        assert_ne!(a.config_hash, c.config_hash);
        assert_eq!(a.config_hash.len(), 64);
        let back: Manifest = toml::from_str(&a.to_toml_string()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn known_hash() {
        assert_eq!(
            config_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
