use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod report;

#[derive(Debug, Parser)]
#[command(name = "fdctmc", version, about = "Expected rewards and timeout synthesis for fixed-delay CTMCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Report format on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Worker threads for the engines (all cores when unset).
    #[arg(long, global = true, env = "FDCTMC_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a model and check well-formedness and the analysis restrictions.
    Validate(ValidateArgs),
    /// Expected total reward until the target at the declared delays.
    ExpReward(ExpRewardArgs),
    /// Synthesize delays minimizing the expected total reward.
    Synthesize(SynthesizeArgs),
    /// Estimate the expected reward by discrete-event simulation.
    Simulate(SimulateArgs),
    /// Count vector-matrix products of naive, iterative and precomputed grid sweeps.
    BenchTransient(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArg {
    /// Model file, or the name of a bundled model (dpm2, dpm4, dpm6, dpm8, rejuv).
    pub model: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RestrictionLevel {
    /// Well-formedness only.
    None,
    /// R1 and R2, as needed by exp-reward.
    Structural,
    /// R1 to R4, as needed by synthesize.
    All,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = RestrictionLevel::All)]
    pub restrictions: RestrictionLevel,
}

#[derive(Debug, Args)]
pub struct ExpRewardArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Precision; the linear-system tolerance is derived from it.
    #[arg(long, default_value_t = 1e-3, value_parser = parse_epsilon)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Auto,
    ValueIteration,
    PolicyIteration,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Termination precision: the result is within epsilon of the optimum.
    #[arg(long, default_value_t = 1e-3, value_parser = parse_epsilon)]
    pub epsilon: f64,
    /// Maximal number of vector-matrix products.
    #[arg(long, value_parser = parse_count)]
    pub budget: Option<u128>,
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    pub solver: SolverArg,
    /// Use this many grid points per event instead of the derived grid.
    #[arg(long, value_parser = parse_count)]
    pub grid_steps: Option<u128>,
    /// Largest candidate delay when --grid-steps is given.
    #[arg(long, requires = "grid_steps")]
    pub max_delay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 100_000, value_parser = parse_count)]
    pub runs: u128,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Steps after which a run is abandoned.
    #[arg(long, default_value_t = fdctmc::sim::DEFAULT_STEP_CAP as u128, value_parser = parse_count)]
    pub step_cap: u128,
    /// Write the first run as CSV to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Grid step.
    #[arg(long)]
    pub delta: f64,
    /// Number of grid points.
    #[arg(long, value_parser = parse_count)]
    pub steps: u128,
    /// Total truncation error over the grid.
    #[arg(long)]
    pub kappa: f64,
    /// Uniformization rate (at least the largest exit rate).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Benchmark the subordinated chain of this fd event instead of the
    /// exponential part of the whole model.
    #[arg(long, conflicts_with = "lambda")]
    pub event: Option<String>,
    /// Maximal number of vector-matrix products per strategy.
    #[arg(long, value_parser = parse_count)]
    pub budget: Option<u128>,
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(format!("epsilon must lie in (0, 1), got {s}"))
    }
}

/// Accepts plain integers and forms like `1e12`.
fn parse_count(s: &str) -> Result<u128, String> {
    if let Ok(n) = s.parse::<u128>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x >= 0.0 && x.fract() == 0.0 && x < 3.4e38 {
        Ok(x as u128)
    } else {
        Err(format!("expected a non-negative integer, got {s}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::ExpReward(a) => commands::exp_reward(a),
        Command::Synthesize(a) => commands::synthesize(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::BenchTransient(a) => commands::bench_transient(a),
    };
    match outcome {
        Ok(report) => {
            print!("{}", report.render(cli.format));
            ExitCode::from(report.exit_code())
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
