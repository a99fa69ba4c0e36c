//! `bsa`: simulate, optimize, sweep and identify the bi-stiffness actuator
//! from TOML configuration files. Results are CSV files plus a manifest.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use bsa_core::experiments::SweepKind;
use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::{parse_angle, Angle, RunConfig};
use crate::exit::Failure;

#[derive(Parser)]
#[command(name = "bsa", version, about = "Bi-stiffness actuator simulation and trajectory optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Actuator parameter file (TOML); built-in prototype values otherwise.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for multi-start guesses and parameter perturbations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulation step, s.
    #[arg(long, global = true, allow_hyphen_values = true)]
    dt: Option<f64>,
    /// Simulate the hysteretic spring.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    hysteresis: Option<bool>,
    /// Apply clutch engagement delays.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    delays: Option<bool>,
    /// Runs per sweep point.
    #[arg(long, global = true)]
    repetitions: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mode schedule with a given motor command.
    Simulate,
    /// Maximize the final link speed for a mode sequence.
    Optimize {
        /// Mode sequence, e.g. `BRK,SEA`.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
        /// Fixed final time, s.
        #[arg(long)]
        tf: Option<f64>,
        /// Initial link angle, e.g. `30deg`.
        #[arg(long, allow_hyphen_values = true)]
        q0: Option<String>,
    },
    /// Final-time sweep of both plans.
    SweepTf,
    /// Initial-angle sweep of both plans.
    SweepQ0,
    /// Fit spring and clutch models to generated or logged data.
    Identify,
    /// Energy traces of optimized motions.
    Energy,
}

fn context(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &common.params {
        cfg.params = Some(p.clone());
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(dt) = common.dt {
        cfg.fidelity.dt = dt;
    }
    if let Some(h) = common.hysteresis {
        cfg.fidelity.hysteresis = h;
    }
    if let Some(d) = common.delays {
        cfg.fidelity.delays = d;
    }
    if let Some(r) = common.repetitions {
        cfg.sweep.repetitions = Some(r);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = context(&cli.common)?;
    if let Command::Optimize { modes, tf, q0 } = &cli.command {
        if let Some(m) = modes {
            cfg.optimize.modes = m
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()
                .map_err(|e: bsa_core::Error| Failure::config(e.to_string()))?;
        }
        if let Some(t) = tf {
            cfg.optimize.final_time = *t;
            cfg.optimize.final_time_range = None;
        }
        if let Some(a) = q0 {
            cfg.optimize.q0 = Angle::Rad(parse_angle(a)?);
        }
    }
    cfg.validate()?;
    let params = cfg.load_params()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)
        .map_err(|e| Failure::config(format!("cannot create output directory {}: {e}", out.display())))?;
    let ctx = Context { cfg, params, out };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Optimize { .. } => commands::optimize(&ctx),
        Command::SweepTf => commands::sweep(&ctx, SweepKind::FinalTime),
        Command::SweepQ0 => commands::sweep(&ctx, SweepKind::InitialAngle),
        Command::Identify => commands::identify(&ctx),
        Command::Energy => commands::energy(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
