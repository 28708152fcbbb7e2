mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "metagame", version, about = "Q-learning hyperparameter meta-game toolkit")]
#[command(after_help = "Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 validation error.")]
struct Cli {
    /// TOML or JSON run configuration (an artifact's embedded config works too).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "METAGAME_SEED")]
    seed: Option<u64>,
    /// Worker threads for sweeps; 0 uses every core.
    #[arg(long, global = true, env = "METAGAME_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true, env = "METAGAME_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one episode and export its price and profit streams.
    Simulate(SimulateArgs),
    /// Estimate the online and limit payoff tensors over the parameter grid.
    Sweep(SweepArgs),
    /// Equilibria, Pareto front, best-response field and reduced projections.
    Analyze(AnalyzeArgs),
    /// Test an observed price stream pair for equilibrium play.
    Detect(DetectArgs),
    /// Write only the figure data of an analysis.
    ExportFigures(FigureArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Player 1 profile as `alpha,epsilon,gamma`.
    #[arg(long, default_value = "0.12,0.278,0.22")]
    pub theta_1: String,
    #[arg(long, default_value = "0.12,0.278,0.22")]
    pub theta_2: String,
    #[arg(long, env = "METAGAME_HORIZON")]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, env = "METAGAME_HORIZON")]
    pub horizon: Option<usize>,
    #[arg(long, env = "METAGAME_REPS")]
    pub reps: Option<usize>,
    /// Use this many points on every axis with the default bounds.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Checkpoint file; defaults to `sweep.ckpt` in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Compute at most this many cells, then stop with a checkpoint.
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Cells per checkpoint batch.
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
}

#[derive(Args, Debug, Clone)]
pub struct AnalysisArgs {
    /// Payoff tensor written by `sweep`.
    #[arg(long)]
    pub tensor: PathBuf,
    /// Fixed payoff slack for approximate equilibria.
    #[arg(long, conflicts_with = "stderr_multiple")]
    pub tau: Option<f64>,
    /// Slack as a multiple of the larger standard error of compared cells.
    #[arg(long, default_value_t = 2.0)]
    pub stderr_multiple: f64,
    /// `joint` or `unilateral`.
    #[arg(long, default_value = "joint")]
    pub pareto: String,
    /// Anchor profile for reduced projections; defaults to the grid point
    /// nearest the reference equilibrium.
    #[arg(long)]
    pub anchor: Option<String>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Args, Debug)]
pub struct FigureArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// CSV with `round,price_1,price_2` columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Infer the price grid from the data instead of the configured one.
    #[arg(long)]
    pub infer_grid: bool,
    /// Baselines to simulate and compare against: meta-nash, pareto-front, decayed-exploration.
    #[arg(long, value_delimiter = ',')]
    pub baselines: Vec<String>,
    /// Equilibrium profile for the meta-nash baseline.
    #[arg(long, default_value = "0.12,0.278,0.22")]
    pub mn_profile: String,
    /// Front profile pair for the pareto-front baseline.
    #[arg(long, num_args = 2, value_names = ["THETA_1", "THETA_2"])]
    pub front_profiles: Option<Vec<String>>,
    /// Permutation seed of the KS tests.
    #[arg(long)]
    pub permutation_seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        output_dir: cli.output_dir.clone(),
        ..Default::default()
    };
    match &cli.command {
        Command::Simulate(a) => overrides.horizon = a.horizon,
        Command::Sweep(a) => {
            overrides.horizon = a.horizon;
            overrides.reps = a.reps;
            overrides.grid_points = a.grid_points;
        }
        _ => {}
    }
    cfg.apply(&overrides);
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, &a),
        Command::Sweep(a) => commands::sweep(&cfg, &a),
        Command::Analyze(a) => commands::analyze(&cfg, &a.analysis, false),
        Command::ExportFigures(a) => commands::analyze(&cfg, &a.analysis, true),
        Command::Detect(mut a) => {
            if let Some(s) = a.permutation_seed.take() {
                cfg.thresholds.permutation_seed = s;
            }
            commands::detect(&cfg, &a)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
