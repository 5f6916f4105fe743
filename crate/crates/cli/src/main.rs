//! `steerlab`: command-line access to the unsteerability criterion, the
//! local hidden state simulation, the one-way steering family and the joint
//! measurability test.
//!
//! Exit codes:
//! - `check`: 0 certified unsteerable, 1 criterion violated, 2 inconclusive
//! - `jm`: 0 certified jointly measurable, 1 not certified, 2 sampled only
//! - `strengthen`: 0 decomposition found, 2 budget exhausted
//! - other commands: 0 on success
//! - 3 for malformed or invalid input, 4 when the computation itself fails

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use steerlab_core::SteerError;

mod commands;

pub const EXIT_INPUT: u8 = 3;
pub const EXIT_COMPUTATION: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "steerlab", version, about = "EPR steering tools for two-qubit states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone, serde::Serialize)]
pub struct CriterionFlags {
    /// Fibonacci lattice size for the grid search.
    #[arg(long, default_value_t = 20_000)]
    pub grid_n: usize,
    /// Slack on the comparison with 1.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Local ascent iterations per seed.
    #[arg(long, default_value_t = 200)]
    pub refine_iters: usize,
    /// Disable the closed form for axially symmetric states.
    #[arg(long)]
    pub force_grid: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the unsteerability criterion for a state file ("-" for stdin).
    Check {
        state: PathBuf,
        #[command(flatten)]
        criterion: CriterionFlags,
    },
    /// Sample the local hidden state model and compare with the quantum assemblage.
    Simulate {
        state: PathBuf,
        /// JSON array of measurement directions `[[x, y, z], ...]`.
        #[arg(long, conflicts_with = "fibonacci")]
        directions_file: Option<PathBuf>,
        /// Use N Fibonacci lattice directions (default: the six signed axes).
        #[arg(long)]
        fibonacci: Option<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run even if the state is not certified.
        #[arg(long)]
        force: bool,
    },
    /// Classify a (p, chi) grid of the one-way steering family as CSV.
    ScanFamily {
        #[arg(long, default_value_t = 50)]
        p_steps: usize,
        #[arg(long, default_value_t = 50)]
        chi_steps: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        criterion: CriterionFlags,
    },
    /// Bisect the visibility above which the filtered state violates CHSH.
    Threshold {
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Joint measurability test for a POVM family (file, "-" or inline JSON).
    Jm {
        family: String,
        /// Samples drawn from built-in families.
        #[arg(long, default_value_t = 2000)]
        grid_n: usize,
    },
    /// Search for a decomposition into a certified and a separable part.
    Strengthen {
        state: PathBuf,
        /// Criterion evaluations allowed.
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the canonical form of a state.
    Canonicalize { state: PathBuf },
}

pub fn exit_code_for(err: &SteerError) -> u8 {
    match err {
        SteerError::NotReproducible { .. } | SteerError::Bracket(_) | SteerError::BobMarginalPure { .. } => {
            EXIT_COMPUTATION
        }
        SteerError::NotHermitian { .. }
        | SteerError::InvalidState(_)
        | SteerError::Precondition(_)
        | SteerError::OutOfRange(_)
        | SteerError::Input(_) => EXIT_INPUT,
    }
}

fn configure_threads() -> Result<(), SteerError> {
    let Ok(raw) = std::env::var("STEERLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| SteerError::Input(format!("STEERLAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| SteerError::Input(format!("cannot build thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(serde_json::Value, u8), SteerError> {
    match cli.command {
        Command::Check { state, criterion } => commands::check(&state, &criterion),
        Command::Simulate {
            state,
            directions_file,
            fibonacci,
            samples,
            seed,
            force,
        } => commands::simulate(&state, directions_file.as_deref(), fibonacci, samples, seed, force),
        Command::ScanFamily {
            p_steps,
            chi_steps,
            out,
            criterion,
        } => commands::scan_family(p_steps, chi_steps, out.as_deref(), &criterion),
        Command::Threshold { tol } => commands::threshold(tol),
        Command::Jm { family, grid_n } => commands::jm(&family, grid_n),
        Command::Strengthen { state, budget, seed } => commands::strengthen(&state, budget, seed),
        Command::Canonicalize { state } => commands::canonicalize_cmd(&state),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    match run(cli) {
        Ok((report, code)) => {
            if !report.is_null() {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            }
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
