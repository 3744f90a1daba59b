//! Command-line front end for the simulator.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ipm_core::checkpoint::Checkpoint;
use ipm_core::config::SimConfig;
use ipm_core::harness::{describe_state, run_config, run_preset, write_outputs, RunOutcome, RunStatus, PRESETS};
use ipm_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "ipm-sim", version, about = "Free-boundary porous-media flow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Configuration file, or inline JSON starting with `{`.
    #[arg(long)]
    config: Option<String>,
    /// Dotted-path override `key=value`; repeatable, applied in order.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the summary printout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configuration (time evolution or iteration, per its mode).
    Run(Common),
    /// Run a named experiment preset.
    Preset {
        /// One of: dn-flat, steady-state, muskat-decay, stability-scan, picard-contract, conservation.
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a checkpoint file.
    Describe {
        checkpoint: PathBuf,
    },
    /// Validate a configuration and print the effective result.
    ValidateConfig(Common),
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Checkpoint { .. } | Error::Grid(_) | Error::Io(_) => {
                Failure::Config(e.into())
            }
            other => Failure::Numerical(other.into()),
        }
    }
}

fn read_config_text(arg: &str) -> Result<String, Failure> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        fs::read_to_string(arg)
            .with_context(|| format!("reading config file {arg}"))
            .map_err(Failure::Config)
    }
}

fn load_config(common: &Common) -> Result<SimConfig, Failure> {
    let text = common.config.as_deref().map(read_config_text).transpose()?;
    Ok(SimConfig::load(text.as_deref(), &common.overrides)?)
}

fn finish(outcome: &RunOutcome, out: &Path, quiet: bool) -> Result<u8, Failure> {
    write_outputs(out, outcome)?;
    if !quiet {
        let s = &outcome.summary;
        if let Some(p) = &s.preset {
            println!("preset {p}");
        }
        for c in &s.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            println!("{mark} {:<32} {:>12.4e} (tolerance {:.4e})", c.name, c.value, c.tolerance);
        }
        if let Some(f) = &s.failure {
            println!("numerical failure: {f}");
        }
        println!("outputs written to {}", out.display());
    }
    Ok(match outcome.summary.status {
        RunStatus::Passed => 0,
        RunStatus::AcceptanceFailure => EXIT_ACCEPTANCE,
        RunStatus::NumericalFailure => EXIT_NUMERICAL,
    })
}

fn execute(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run(common) => {
            let config = load_config(&common)?;
            let outcome = run_config(&config)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("runs/run"));
            finish(&outcome, &out, common.quiet)
        }
        Command::Preset { name, common } => {
            if common.config.is_some() {
                return Err(Failure::Config(anyhow::anyhow!(
                    "presets carry their own configuration; use --override to adjust it"
                )));
            }
            if !PRESETS.contains(&name.as_str()) {
                return Err(Failure::Config(anyhow::anyhow!(
                    "unknown preset `{name}`; expected one of {}",
                    PRESETS.join(", ")
                )));
            }
            let outcome = run_preset(&name, &common.overrides)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&name));
            finish(&outcome, &out, common.quiet)
        }
        Command::Describe { checkpoint } => {
            let ckpt = Checkpoint::read(&checkpoint)?;
            print!("{}", describe_state(&ckpt)?);
            Ok(0)
        }
        Command::ValidateConfig(common) => {
            let config = load_config(&common)?;
            if !common.quiet {
                println!("{}", config.to_json_pretty());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
