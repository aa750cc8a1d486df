//! `ot-sitesel`: Wasserstein site selection from a covariate CSV.
//!
//! Every command prints a JSON envelope (or writes it to `--out`). Exit
//! codes: 0 success (including a non-converged robust solve), 2 input
//! error, 3 guard refusal, 1 internal error.

mod commands;
mod envelope;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sitesel::radius::Band;
use sitesel::select::SolveMode;
use sitesel::Error;

#[derive(Parser, Debug)]
#[command(name = "ot-sitesel", version, about = "Wasserstein site selection for multi-site experiments")]
struct Cli {
    /// Worker threads; defaults to all cores for `simulate` and 1 otherwise.
    #[arg(long, global = true, env = "OT_SITESEL_THREADS")]
    threads: Option<usize>,

    /// Master seed for every random stream (default 0). For `simulate` it
    /// overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Non-robust selection minimising W_p to the population.
    Select(SelectArgs),
    /// Wasserstein-ball robust selection.
    Dro(DroArgs),
    /// Jaccard-calibrated robustness radii with the full curve.
    Radius(RadiusArgs),
    /// Simulation sweep from a TOML config.
    Simulate(SimulateArgs),
    /// Brute-force comparators for small instances.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Serialize)]
struct TableArgs {
    /// Covariate CSV: header row, `site_id` first, numeric covariates after.
    input: PathBuf,

    /// Solve on raw covariates instead of per-column z-scores.
    #[arg(long)]
    no_standardize: bool,

    /// Write the envelope here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ProblemArgs {
    /// Number of sites to select.
    #[arg(long)]
    k: usize,

    /// Wasserstein exponent.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    p: u8,

    #[arg(long, default_value_t = SolveMode::Auto)]
    mode: SolveMode,
}

#[derive(Args, Debug, Serialize)]
struct SelectArgs {
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    problem: ProblemArgs,

    /// Include the population-to-selection transport plan.
    #[arg(long)]
    emit_plan: bool,
}

#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    /// Stopping gap between the bounds, in W_p units.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,

    #[arg(long, default_value_t = 50)]
    max_iter: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Level {
    Moderate,
    High,
    Maximum,
}

impl From<Level> for Band {
    fn from(l: Level) -> Band {
        match l {
            Level::Moderate => Band::Moderate,
            Level::High => Band::High,
            Level::Maximum => Band::Maximum,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(group = clap::ArgGroup::new("radius").required(true).args(["rho", "rho_level"]))]
struct DroArgs {
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,

    /// Ball radius in (standardized) covariate units.
    #[arg(long)]
    rho: Option<f64>,

    /// Calibrate the radius to a Jaccard band instead.
    #[arg(long, value_enum)]
    rho_level: Option<Level>,

    /// Radius grid size used with `--rho-level`.
    #[arg(long, default_value_t = 12)]
    grid: usize,

    /// Include the population-to-selection transport plan.
    #[arg(long)]
    emit_plan: bool,
}

#[derive(Args, Debug, Serialize)]
struct RadiusArgs {
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,

    #[arg(long, default_value_t = 12)]
    grid: usize,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// TOML sweep description.
    #[arg(long)]
    config: PathBuf,

    /// Directory for `results.csv` and `summary.json`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OracleKind {
    Select,
    Dro,
    Stratification,
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    #[arg(long, value_enum)]
    kind: OracleKind,

    #[command(flatten)]
    table: TableArgs,

    #[arg(long)]
    k: usize,

    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    p: u8,

    /// Ball radius for `--kind dro`.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,

    /// Adversary grid resolution (masses are multiples of 1/steps).
    #[arg(long, default_value_t = 16)]
    steps: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) => 2,
        Error::Guard(_) => 3,
        Error::Internal(_) => 1,
    }
}

fn init_threads(cli: &Cli) -> Result<(), Error> {
    let default = match cli.command {
        Command::Simulate(_) => 0,
        _ => 1,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(default))
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads(&cli).and_then(|()| match &cli.command {
        Command::Select(a) => commands::select(a, cli.seed),
        Command::Dro(a) => commands::dro(a, cli.seed),
        Command::Radius(a) => commands::radius(a, cli.seed),
        Command::Simulate(a) => commands::simulate(a, cli.seed),
        Command::Oracle(a) => commands::oracle(a, cli.seed),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ot-sitesel: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
