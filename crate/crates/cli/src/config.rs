//! Run configuration file (TOML) and command-line overrides.

use std::path::{Path, PathBuf};

use bsa_core::experiments::PlanSpec;
use bsa_core::trajopt::{component, CollocationConfig, TerminalBound};
use bsa_core::{ActuatorParams, Error, HybridState, Mode, SpringLaw};
use serde::{Deserialize, Serialize};

use crate::exit::Failure;

/// An angle given as a number (rad) or a string with a `deg` / `rad` suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Rad(f64),
    Text(String),
}

impl Angle {
    pub fn radians(&self) -> Result<f64, Failure> {
        match self {
            Angle::Rad(v) => Ok(*v),
            Angle::Text(s) => parse_angle(s),
        }
    }
}

pub fn parse_angle(text: &str) -> Result<f64, Failure> {
    let s = text.trim();
    let (number, scale) = if let Some(v) = s.strip_suffix("deg") {
        (v, std::f64::consts::PI / 180.0)
    } else if let Some(v) = s.strip_suffix("rad") {
        (v, 1.0)
    } else {
        (s, 1.0)
    };
    number
        .trim()
        .parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| Failure::config(format!("cannot read angle `{text}`; use e.g. `30deg` or `0.52rad`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fidelity {
    pub dt: f64,
    pub hysteresis: bool,
    pub delays: bool,
    pub smoothed: bool,
}

impl Default for Fidelity {
    fn default() -> Self {
        Fidelity {
            dt: bsa_core::sim::DEFAULT_DT,
            hysteresis: false,
            delays: false,
            smoothed: false,
        }
    }
}

impl Fidelity {
    pub fn sim_options(&self) -> bsa_core::SimOptions {
        bsa_core::SimOptions {
            dt: self.dt,
            law: self.law(),
            delays: self.delays,
            smoothed: self.smoothed,
        }
    }

    pub fn law(&self) -> SpringLaw {
        if self.hysteresis {
            SpringLaw::BoucWen
        } else {
            SpringLaw::Linear
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseEntry {
    pub mode: Mode,
    pub duration: f64,
}

/// Motor command: constant, inline knots, or a CSV file with columns `t, u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlEntry {
    pub constant: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    pub file: Option<PathBuf>,
}

impl Default for ControlEntry {
    fn default() -> Self {
        ControlEntry {
            constant: Some(0.4),
            times: None,
            values: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialEntry {
    pub theta: f64,
    pub psi: f64,
    pub q: Angle,
    pub psi_dot: f64,
    pub q_dot: f64,
}

impl Default for InitialEntry {
    fn default() -> Self {
        InitialEntry {
            theta: 0.0,
            psi: 0.0,
            q: Angle::Rad(0.0),
            psi_dot: 0.0,
            q_dot: 0.0,
        }
    }
}

impl InitialEntry {
    pub fn state(&self) -> Result<HybridState, Failure> {
        Ok(HybridState {
            theta: self.theta,
            psi: self.psi,
            q: self.q.radians()?,
            psi_dot: self.psi_dot,
            q_dot: self.q_dot,
            h: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub phases: Vec<PhaseEntry>,
    pub control: ControlEntry,
    pub initial: InitialEntry,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            phases: vec![
                PhaseEntry {
                    mode: Mode::Brk,
                    duration: 0.7,
                },
                PhaseEntry {
                    mode: Mode::Sea,
                    duration: 0.3,
                },
            ],
            control: ControlEntry::default(),
            initial: InitialEntry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalEntry {
    /// `theta`, `psi`, `q`, `psi_dot` or `q_dot`.
    pub component: String,
    #[serde(default = "neg_inf")]
    pub lo: f64,
    #[serde(default = "pos_inf")]
    pub hi: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

impl TerminalEntry {
    pub fn bound(&self) -> Result<TerminalBound, Failure> {
        let component = match self.component.as_str() {
            "theta" => component::THETA,
            "psi" => component::PSI,
            "q" => component::Q,
            "psi_dot" => component::PSI_DOT,
            "q_dot" => component::Q_DOT,
            other => return Err(Failure::config(format!("unknown terminal component `{other}`"))),
        };
        Ok(TerminalBound {
            component,
            lo: self.lo,
            hi: self.hi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub modes: Vec<Mode>,
    /// Fixed final time, s; ignored when `final_time_range` is given.
    pub final_time: f64,
    pub final_time_range: Option<[f64; 2]>,
    pub q0: Angle,
    /// Maximize speed in the direction the link falls from `q0`.
    pub fall_direction: bool,
    pub terminal: Vec<TerminalEntry>,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        OptimizeSection {
            modes: vec![Mode::Brk, Mode::Sea],
            final_time: 1.0,
            final_time_range: None,
            q0: Angle::Rad(0.0),
            fall_direction: true,
            terminal: Vec::new(),
        }
    }
}

/// Overrides of the built-in sweep definitions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub final_times: Option<Vec<f64>>,
    pub initial_angles: Option<Vec<Angle>>,
    pub plans: Option<Vec<PlanSpec>>,
    pub repetitions: Option<usize>,
    pub perturbation: Option<f64>,
    pub fit_degree: Option<usize>,
    pub max_final_time: Option<f64>,
    pub full_fidelity: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySection {
    pub set_points: Vec<f64>,
    pub cycles: usize,
    pub theta_limits: [f64; 2],
    /// Logged `t, phi, tau` files to fit instead of generated cycles.
    pub data: Vec<PathBuf>,
    /// Logged `t, command, response` file; a simulated log is used otherwise.
    pub delay_log: Option<PathBuf>,
    pub threshold: f64,
    pub fit_stiffness: bool,
}

impl Default for IdentifySection {
    fn default() -> Self {
        IdentifySection {
            set_points: vec![1.0, 2.0, 3.0, 4.0],
            cycles: 10,
            theta_limits: [-0.29, 0.29],
            data: Vec::new(),
            delay_log: None,
            threshold: bsa_core::identify::DEFAULT_THRESHOLD,
            fit_stiffness: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub final_times: Vec<f64>,
    pub plans: Vec<PlanSpec>,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            final_times: vec![0.3, 0.7, 1.0],
            plans: vec![PlanSpec::new("BSA", &[Mode::Brk, Mode::Sea]), PlanSpec::new("SEA", &[Mode::Sea])],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Parameter file; built-in prototype values when absent.
    pub params: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub fidelity: Fidelity,
    pub collocation: CollocationConfig,
    pub simulate: SimulateSection,
    pub optimize: OptimizeSection,
    pub sweep: SweepSection,
    pub identify: IdentifySection,
    pub energy: EnergySection,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
        // relative paths inside the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.params.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.simulate.control.file.as_mut() {
            rebase(p);
        }
        cfg.identify.data.iter_mut().for_each(rebase);
        if let Some(p) = cfg.identify.delay_log.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn load_params(&self) -> Result<ActuatorParams, Failure> {
        let params = match &self.params {
            Some(path) => ActuatorParams::from_file(path).map_err(|e| match e {
                Error::Io(io) => Failure::config(format!("cannot read parameter file {}: {io}", path.display())),
                other => Failure::from(other),
            })?,
            None => ActuatorParams::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if !(self.fidelity.dt.is_finite() && self.fidelity.dt > 0.0) {
            return Err(Failure::config(format!("fidelity.dt must be > 0, got {}", self.fidelity.dt)));
        }
        self.collocation.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_accept_units() {
        assert!((parse_angle("30deg").unwrap() - 30f64.to_radians()).abs() < 1e-15);
        assert_eq!(parse_angle("0.5rad").unwrap(), 0.5);
        assert_eq!(parse_angle(" 0.25 ").unwrap(), 0.25);
        assert!(parse_angle("thirty").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[fidelity]\nstep = 1e-3\n").unwrap_err();
        assert!(err.to_string().contains("step"));
        let cfg: RunConfig = toml::from_str("[optimize]\nq0 = \"30deg\"\nmodes = [\"STG\", \"SEA\"]\n").unwrap();
        assert_eq!(cfg.optimize.modes, vec![Mode::Stg, Mode::Sea]);
        assert!((cfg.optimize.q0.radians().unwrap() - 30f64.to_radians()).abs() < 1e-15);
    }
}
