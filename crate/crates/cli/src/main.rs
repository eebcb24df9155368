//! `whitham`: solve, continue and stability-check small-amplitude traveling
//! waves of Whitham-type equations.
//!
//! Exit status: 0 on success, 1 when a scientific check fails, 2 on usage or
//! I/O errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use whitham_core::newton::LinearSolver;
use whitham_core::solver::Mode;

#[derive(Parser, Debug)]
#[command(name = "whitham", version, about)]
struct Cli {
    /// Worker threads for independent rungs and reports (default: all cores).
    #[arg(long, global = true, env = "WHITHAM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the model hypotheses and report the KdV coefficient gamma.
    Verify(VerifyArgs),
    /// Solve for one rescaled wave profile.
    Solve(SolveArgs),
    /// Follow the wave branch along a ladder of eps values.
    Continue(ContinueArgs),
    /// Eigenvalues, VK quantity and stability verdict for a saved solution.
    Stability(StabilityArgs),
    /// Limit profile (soliton or cnoidal wave) and its linearized spectrum.
    Limit(LimitArgs),
    /// End-to-end run on the bundled Whitham model with a summary table.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Whitham,
    Kdv,
    /// Convex symbol that fails the hypotheses.
    Anti,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model definition file (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub model: Option<PathBuf>,
    /// Bundled model, used when --model is absent.
    #[arg(long, value_enum, default_value = "whitham")]
    pub preset: Preset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Solitary,
    Periodic,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Solitary => Mode::Solitary,
            ModeArg::Periodic => Mode::Periodic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Dense,
    Krylov,
}

impl From<SolverArg> for LinearSolver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Dense => LinearSolver::Dense,
            SolverArg::Krylov => LinearSolver::Krylov,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Solitary waves live on a large periodic cell; periodic waves have this half-period.
    #[arg(long, value_enum, default_value = "solitary")]
    pub mode: ModeArg,
    /// Half-period P of the cell [-P, P) in the rescaled variable.
    #[arg(long, default_value_t = 40.0)]
    pub half_period: f64,
    /// Number of grid points (even).
    #[arg(long, default_value_t = 1024)]
    pub modes: usize,
}

#[derive(Args, Debug, Clone)]
pub struct NewtonArgs {
    /// Target sup-norm residual of the fixed-point map.
    #[arg(long, default_value_t = 1e-11)]
    pub newton_tol: f64,
    #[arg(long, default_value_t = 25)]
    pub max_iter: usize,
    /// Initial step length factor in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub damping: f64,
    #[arg(long, value_enum, default_value = "dense")]
    pub linear_solver: SolverArg,
    /// Evaluate the nonlinearity on a 3/2-padded grid.
    #[arg(long)]
    pub dealias: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sample points per hypothesis (at least 100).
    #[arg(long, default_value_t = whitham_core::model::DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Override the convexity radius.
    #[arg(long)]
    pub k_star: Option<f64>,
    /// Override the tail sampling horizon.
    #[arg(long)]
    pub k_max: Option<f64>,
    /// Output prefix.
    #[arg(long, default_value = "whitham")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Amplitude parameter, 0 < eps < 1.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub newton: NewtonArgs,
    /// Output prefix.
    #[arg(long, default_value = "whitham")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ContinueArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Strictly increasing eps values, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.025,0.05,0.1,0.2")]
    pub eps_ladder: Vec<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub newton: NewtonArgs,
    /// Output prefix.
    #[arg(long, default_value = "whitham")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    /// `<prefix>_meta.json` written by solve or continue; the profile CSV is found next to it.
    #[arg(long)]
    pub solution: PathBuf,
    /// Also compute the full grid spectrum of d/dx L.
    #[arg(long)]
    pub full_spectrum: bool,
    /// Shift for the resolvent comparison.
    #[arg(long, default_value_t = 2.0)]
    pub mu: f64,
    /// Seed for the random fields of the resolvent comparison.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of eigenvalues to report.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Output prefix (default: the solution's prefix).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LimitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// KdV coefficient; derived from the model when absent.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "solitary")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 40.0)]
    pub half_period: f64,
    #[arg(long, default_value_t = 2048)]
    pub modes: usize,
    /// Output prefix.
    #[arg(long, default_value = "whitham")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReproduceMode {
    Solitary,
    Periodic,
    Both,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ReproduceMode,
    #[arg(long, value_delimiter = ',', default_value = "0.025,0.05,0.1,0.2")]
    pub eps_ladder: Vec<f64>,
    #[arg(long, default_value_t = 40.0)]
    pub half_period: f64,
    #[arg(long, default_value_t = 1024)]
    pub modes: usize,
    /// Seed for the random fields of the resolvent comparison.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix.
    #[arg(long, default_value = "whitham")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Verify(a) => commands::verify(a),
        Command::Solve(a) => commands::solve(a),
        Command::Continue(a) => commands::continuation(a),
        Command::Stability(a) => commands::stability(a),
        Command::Limit(a) => commands::limit(a),
        Command::Reproduce(a) => commands::reproduce(a),
    };
    match result {
        Ok(commands::Status::Success) => ExitCode::SUCCESS,
        Ok(commands::Status::Failed(why)) => {
            eprintln!("failed: {why}");
            ExitCode::from(1)
        }
        Err(e) => {
            if let Some(s) = e.downcast_ref::<commands::Scientific>() {
                eprintln!("failed: {s}");
                for cause in e.chain().skip(1) {
                    eprintln!("  caused by: {cause}");
                }
                ExitCode::from(1)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        }
    }
}
