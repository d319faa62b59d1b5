//! `thincell` — simulation and analysis tool for nonlinear Faraday-Ramsey
//! rotation in thin vapor cells.
//!
//! Every subcommand reads one TOML config, writes its outputs plus a
//! manifest into the output directory, and never touches its inputs.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 statistical/degeneracy failure, 1 anything else (I/O).

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thincell_core::CoreError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(CoreError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Io(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(CoreError::Domain(_)) | CliError::Core(CoreError::Validation(_)) => 2,
            CliError::Core(CoreError::Numeric(_)) => 3,
            CliError::Core(CoreError::Statistics(_)) | CliError::Core(CoreError::Degenerate(_)) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "thincell",
    version,
    about = "Nonlinear Faraday-Ramsey rotation in thin vapor cells: lineshapes, kinetics, OBE dynamics, Monte Carlo transport, and curve fitting"
)]
struct Cli {
    /// Cap the worker thread count (default: all cores). Results are
    /// independent of this value.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Directory for outputs and the run manifest (default: current
    /// directory).
    #[arg(long, global = true, env = "THINCELL_OUT_DIR", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override one config value, e.g. --set montecarlo.seed=7. Repeatable;
    /// applied in order before validation.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic rotation lineshape over a magnetic-field grid
    Lineshape(RunArgs),
    /// Fringe width metrics versus pump-probe separation
    ScanFwhm(RunArgs),
    /// Arrival-velocity marginal (closed form and quadrature) and angular acceptance
    Distributions(RunArgs),
    /// Pumped-atom budget, detected flux, and spin-exchange scales
    Flux(RunArgs),
    /// Optical Bloch pump-dark-probe sequence with level-resolved dynamics
    Obe(RunArgs),
    /// Ballistic transport Monte Carlo estimate of the lineshape
    Montecarlo(RunArgs),
    /// Estimate rotation-curve parameters from a measured spectrum
    Fit(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Lineshape(_) => "lineshape",
            Command::ScanFwhm(_) => "scan-fwhm",
            Command::Distributions(_) => "distributions",
            Command::Flux(_) => "flux",
            Command::Obe(_) => "obe",
            Command::Montecarlo(_) => "montecarlo",
            Command::Fit(_) => "fit",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Lineshape(a)
            | Command::ScanFwhm(a)
            | Command::Distributions(a)
            | Command::Flux(a)
            | Command::Obe(a)
            | Command::Montecarlo(a)
            | Command::Fit(a) => a,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    let args = cli.command.args();
    let cfg = config::load(&args.config, &args.set)?;
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut ctx = output::RunContext::new(cli.command.name(), cfg.to_toml(), out_dir);
    match &cli.command {
        Command::Lineshape(_) => commands::lineshape(&cfg, &mut ctx)?,
        Command::ScanFwhm(_) => commands::scan_fwhm(&cfg, &mut ctx)?,
        Command::Distributions(_) => commands::distributions(&cfg, &mut ctx)?,
        Command::Flux(_) => commands::flux(&cfg, &mut ctx)?,
        Command::Obe(_) => commands::obe(&cfg, &mut ctx)?,
        Command::Montecarlo(_) => commands::montecarlo(&cfg, &mut ctx)?,
        Command::Fit(_) => commands::fit(&cfg, &mut ctx)?,
    }
    ctx.finish()?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
