//! `cnot`: run solvers on scenarios, verify equilibria, compare runs, run the
//! finite-`N` convergence sweep and compute transport distances.
//!
//! Exit codes: 0 success, 2 honest non-convergence (outputs still written),
//! 1 input or precondition error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "cnot", version, about = "Equilibria of nonatomic games via discrete optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one solver on a scenario; writes measure.csv, trace.csv, manifest.json.
    Solve(SolveArgs),
    /// Recompute the equilibrium certificates of a solve run.
    Verify(VerifyArgs),
    /// Pairwise W1 among the final measures of runs on the same scenario.
    Compare(CompareArgs),
    /// Pure Nash profiles of N-player games against a continuum reference.
    ConvergeN(ConvergeArgs),
    /// W1, W_c or the permutation quotient distance between measure CSV files.
    Distance(DistanceArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Overrides {
    /// Bundled scenario name or path to a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    /// Nodes per axis on the strategy grid.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial mirror-descent step.
    #[arg(long)]
    pub eta0: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// ode, variational or best-reply.
    #[arg(long)]
    pub solver: String,
    /// Initial measure for best-reply and variational.
    #[arg(long, value_enum, default_value_t = Init::Reference)]
    pub init: Init,
    /// Also write the final transport plan and dual potentials.
    #[arg(long)]
    pub dump_transport: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Init {
    /// The reference measure m0, normalised.
    Reference,
    /// Random weights drawn from the seed.
    Random,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Directory written by `solve`.
    #[arg(long)]
    pub run: PathBuf,
    /// Relative tolerance on the defect and the Euler-Lagrange residual.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Directories written by `solve`.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Player counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 50, 200, 1000])]
    pub n_list: Vec<usize>,
    /// Number of seeds, counted up from --seed (default 1).
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Solver for the continuum reference.
    #[arg(long, default_value = "best-reply")]
    pub solver: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    W1,
    Wc,
    Quotient,
}

#[derive(Args, Debug)]
pub struct DistanceArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::W1)]
    pub metric: Metric,
    /// Exponent p of c = s|θ − x|^p / p for --metric wc.
    #[arg(long, default_value_t = 2.0)]
    pub exponent: f64,
    /// Scale s of the cost for --metric wc.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Solve(a) => commands::solve(a, &argv),
        Command::Verify(a) => commands::verify(a),
        Command::Compare(a) => commands::compare(a, &argv),
        Command::ConvergeN(a) => commands::converge_n(a, &argv),
        Command::Distance(a) => commands::distance(a),
    };
    match result {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// `CNOT_THREADS` caps the rayon pool.
fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("CNOT_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("CNOT_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            anyhow::bail!("CNOT_THREADS must be a positive integer, got `{v}`");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
