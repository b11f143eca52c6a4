//! `cces`: calibrate cascaded-CES general-equilibrium economies from
//! two-period linked input-output tables and run counterfactual
//! productivity shocks.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;

/// Exit codes: 0 success, 2 validation failure, 3 convergence failure,
/// 4 I/O error.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
    Convergence(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) | CliError::Validation(m) | CliError::Convergence(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<cces_core::Error> for CliError {
    fn from(err: cces_core::Error) -> Self {
        use cces_core::Error as E;
        match &err {
            E::Io { .. } | E::Parse { .. } => CliError::Io(err.to_string()),
            E::Convergence { .. } | E::GenerationFailed { .. } => {
                CliError::Convergence(err.to_string())
            }
            _ => CliError::Validation(err.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cces",
    version,
    about = "Cascaded-CES general equilibrium: calibration, TFP, and counterfactual shocks"
)]
struct Cli {
    /// TOML config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-period economy with known ground truth
    Generate(GenerateArgs),
    /// Derive the stream order from the input-output incidence
    Order(OrderArgs),
    /// Fit restoring nest parameters and sectoral TFP
    Calibrate(CalibrateArgs),
    /// Solve the period, halfway, and interpolated equilibria
    Solve(SolveArgs),
    /// Estimate household preferences and capital prices
    Household(HouseholdArgs),
    /// Run the sectoral productivity-shock sweep
    Shock(ShockArgs),
    /// Emit per-sector AUES/MES substitution-elasticity tables
    Elasticities(ElasticitiesArgs),
    /// Run ingest -> order -> calibrate -> solve -> household -> shock
    Pipeline(PipelineArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Number of sectors
    #[arg(long)]
    n: Option<usize>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Probability of each upstream input link
    #[arg(long)]
    density: Option<f64>,
    /// Household CES exponent
    #[arg(long)]
    lambda: Option<f64>,
    /// Time preference factor
    #[arg(long)]
    beta: Option<f64>,
    /// Depreciation rate
    #[arg(long)]
    delta: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct OrderArgs {
    /// Directory with the table CSVs
    #[arg(long)]
    input: PathBuf,
    /// Incidence period: t0, t1, or union
    #[arg(long)]
    period: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Incidence period defining the stream order
    #[arg(long)]
    order_period: Option<String>,
    /// Loosened hard tolerance for the table balances
    #[arg(long)]
    balance_tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(long)]
    input: PathBuf,
    /// Fixed-point tolerance (relative sup-norm)
    #[arg(long)]
    tol: Option<f64>,
    /// Under-relaxation factor in [0,1)
    #[arg(long)]
    damping: Option<f64>,
    /// Also solve at this interpolation weight in [0,1]
    #[arg(long)]
    interpolate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct HouseholdArgs {
    #[arg(long)]
    input: PathBuf,
    /// Time preference factor (default: five-year 1.03^-5)
    #[arg(long)]
    beta: Option<f64>,
    /// Depreciation rate (default: five-year 1-(1-0.125)^5)
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ShockArgs {
    #[arg(long)]
    input: PathBuf,
    /// Shock size in the tables' money units
    #[arg(long)]
    shock_size: Option<f64>,
    /// Price elasticity of capital formation (default: measured)
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
    /// Systems to sweep: ces, cobb_douglas, leontief
    #[arg(long)]
    systems: Option<Vec<String>>,
    /// Write per-sector outcome_{k}.json files
    #[arg(long)]
    emit_outcomes: bool,
    /// CSV (sector_id,label) with classification labels
    #[arg(long)]
    classification: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ElasticitiesArgs {
    #[arg(long)]
    input: PathBuf,
    /// Sectors to tabulate (default: all)
    #[arg(long)]
    sector: Vec<usize>,
    /// Price point: t0 or t1
    #[arg(long)]
    period: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct PipelineArgs {
    /// Directory with existing table CSVs
    #[arg(long)]
    input: Option<PathBuf>,
    /// Loosened hard tolerance for the table balances
    #[arg(long)]
    balance_tol: Option<f64>,
    /// Generate a synthetic economy of this size instead of ingesting
    #[arg(long)]
    generate_n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    shock_size: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => commands::cmd_generate(args, &file),
        Command::Order(args) => commands::cmd_order(args, &file),
        Command::Calibrate(args) => commands::cmd_calibrate(args, &file),
        Command::Solve(args) => commands::cmd_solve(args, &file),
        Command::Household(args) => commands::cmd_household(args, &file),
        Command::Shock(args) => commands::cmd_shock(args, &file),
        Command::Elasticities(args) => commands::cmd_elasticities(args, &file),
        Command::Pipeline(args) => commands::cmd_pipeline(args, &file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
