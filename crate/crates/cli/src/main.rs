//! `qlmpc` command-line driver.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

mod config;
mod diagnose;
mod output;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qlmpc::{Mode, Variant};

use config::Overrides;

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl CliError {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        CliError::Config(e.into())
    }

    pub fn numerical(e: impl Into<anyhow::Error>) -> Self {
        CliError::Numerical(e.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "qlmpc", version, about = "Quasi-LPV MPC closed-loop simulation and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write a trajectory CSV and summary JSON.
    Simulate(CommonArgs),
    /// Check the iteration's properties at the scenario's first timestep.
    Diagnose(CommonArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Converge,
    Rti,
}

#[derive(Args)]
struct CommonArgs {
    /// Builtin scenario: unicycle, adip, tiny-lti, tiny-qlpv.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Stopping tolerance on the optimality residual.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Closed-loop runs for the timing statistics [default: 50].
    #[arg(long)]
    repeat: Option<usize>,
    /// Output directory [default: .].
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON run configuration (scenario name or inline scenario, out, repeat, seed).
    #[arg(long)]
    config: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            scenario: self.scenario.clone(),
            variant: self.variant.map(|v| match v {
                VariantArg::Standard => Variant::Standard,
                VariantArg::Exact => Variant::Exact,
            }),
            mode: self.mode.map(|m| match m {
                ModeArg::Converge => Mode::Converge,
                ModeArg::Rti => Mode::RealTimeIteration,
            }),
            tol: self.tol,
            max_iter: self.max_iter,
            repeat: self.repeat,
            out: self.out.clone(),
            config: self.config.clone(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = config::resolve(&args.overrides()).map_err(CliError::Config)?;
            let written = simulate::run(&cfg)?;
            println!("{}", written.trajectory.display());
            println!("{}", written.summary.display());
        }
        Command::Diagnose(args) => {
            let cfg = config::resolve(&args.overrides()).map_err(CliError::Config)?;
            println!("{}", diagnose::run(&cfg)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, err) = match &e {
                CliError::Config(err) => ("configuration error", err),
                CliError::Numerical(err) => ("numerical failure", err),
            };
            eprintln!("qlmpc: {kind}: {err:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
