//! `latvol` command-line driver.
//!
//! Exit codes: 0 success, 1 assertion failure, 2 invalid input, 3 solver
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "latvol", version, about = "Exact lattice bond volumes and consistent A/C coupling")]
struct Cli {
    /// Worker threads (falls back to LATVOL_THREADS, then all cores).
    #[arg(long, global = true, env = "LATVOL_THREADS")]
    threads: Option<usize>,
    /// JSON file with the command's parameters; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Effective bond volume Len(T, r) of a lattice tetrahedron.
    Bondvol(BondvolArgs),
    /// Ghost forces of the coupled energy at a uniform deformation.
    Patchtest(PatchtestArgs),
    /// Vacancy convergence study against the atomistic reference.
    Converge(ConvergeArgs),
    /// Stability regions of the coupled model and the infinite lattice.
    Stability(StabilityArgs),
    /// Oracle-equivalence and patch-test suites at fixed seeds.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
pub struct BondvolArgs {
    /// Four vertices as 12 comma-separated integers.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tet: Option<Vec<i64>>,
    /// Bond direction as 3 comma-separated integers.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub dir: Option<Vec<i64>>,
    /// Also enumerate lattice bonds directly and report the difference.
    #[arg(long)]
    pub oracle: bool,
    /// Lattice-point budget of the enumeration.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PatchtestArgs {
    #[arg(long)]
    pub n: Option<i64>,
    #[arg(long)]
    pub k: Option<i64>,
    /// Applied gradient, 9 comma-separated entries in row-major order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub f: Option<Vec<f64>>,
    /// Replace the effective volumes by tetrahedron volumes.
    #[arg(long)]
    pub cauchy_born: bool,
    /// Also write the model document (mesh, sites, volume table) here.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Exit 1 unless the relative ghost force is at most 1e-10.
    #[arg(long)]
    pub assert: bool,
}

#[derive(Args, Debug)]
pub struct ConvergeArgs {
    /// Comma-separated list of N.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<i64>>,
    /// Comma-separated list of K; values outside 2 ≤ K < N are skipped.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<i64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub f: Option<Vec<f64>>,
    /// Newton tolerance on the gradient max-norm.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Exit 1 unless every N with two or more rows has slopes within bounds.
    #[arg(long)]
    pub assert: bool,
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    #[arg(long)]
    pub n: Option<i64>,
    #[arg(long)]
    pub k: Option<i64>,
    /// Grid step in t and s.
    #[arg(long)]
    pub step: Option<f64>,
    /// Reciprocal grid density per axis of the Fourier test.
    #[arg(long)]
    pub k_grid: Option<usize>,
    /// Exit 1 unless the coupled region contains the Fourier region.
    #[arg(long)]
    pub assert: bool,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random tetrahedra in the oracle suite.
    #[arg(long)]
    pub tets: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    let file = cli.config.as_deref();
    let out = cli.out.as_deref();
    match cli.command {
        Command::Bondvol(a) => commands::bondvol(config::bondvol(&a, file)?, out),
        Command::Patchtest(a) => commands::patchtest(config::patchtest(&a, file)?, a.model_out.as_deref(), a.assert, out),
        Command::Converge(a) => commands::converge(config::converge(&a, file)?, a.assert, out),
        Command::Stability(a) => commands::stability(config::stability(&a, file)?, a.assert, out),
        Command::Selftest(a) => commands::selftest(config::selftest(&a, file)?, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("latvol: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
