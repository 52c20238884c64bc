//! `probecal`: simulate calibration studies, fit the agreement models and
//! summarise the posterior.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "probecal", version, about = "Bayesian examiner agreement for probing-depth calibration studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a calibration study from known parameters.
    Simulate(SimulateArgs),
    /// Run Gibbs chains for one model and save the retained draws.
    Fit(FitArgs),
    /// Convergence diagnostics, posterior summaries and DIC₃ for a run.
    Diagnose(DiagnoseArgs),
    /// Observed and posterior-predictive agreement indices.
    Agreement(AgreementArgs),
    /// Least-squares partition of one examiner's site biases.
    Cluster(ClusterArgs),
    /// Fit all four models and rank them by DIC₃.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthModeArg {
    Exact,
    Mixture,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file with generative parameters and settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recorded depths (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the latent true depths (CSV).
    #[arg(long)]
    pub latent: Option<PathBuf>,
    /// Also write Monte Carlo population agreement for every table row (JSON).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(100_000..))]
    pub truth_draws: Option<u64>,
    #[arg(long, value_enum)]
    pub truth_mode: Option<TruthModeArg>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub chains: Option<u64>,
    /// Burn-in sweeps per chain.
    #[arg(long)]
    pub burnin: Option<u64>,
    /// Retained draws per chain.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub keep: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub thin: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dirichlet-process concentration.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Dirichlet-process truncation level.
    #[arg(long)]
    pub truncation: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// 0 (shared σ), 1 (per-examiner σ), 2 (constant bias) or 3 (site bias).
    #[arg(long)]
    pub model: Option<String>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep latent log depths of every retained draw.
    #[arg(long)]
    pub retain_latent: bool,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Compute DIC₃ (needs --data).
    #[arg(long, requires = "data")]
    pub dic3: bool,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pick posterior draws with replacement.
    #[arg(long)]
    pub with_replacement: bool,
    /// Redraw site depths in every replicate.
    #[arg(long)]
    pub regenerate_depths: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub examiner: String,
    /// Comma-separated class numbers to merge; repeatable.
    #[arg(long)]
    pub merge: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the co-clustering matrix as little-endian f32 with a JSON header.
    #[arg(long)]
    pub delta: Option<PathBuf>,
    /// Posterior-median depth (mm) at which a site counts as deep.
    #[arg(long)]
    pub deep_threshold: Option<f64>,
    /// Characterise singleton classes too.
    #[arg(long)]
    pub include_singletons: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Ranking table (JSON); printed as text either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub chain: ChainArgs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Agreement(a) => commands::agreement(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Compare(a) => commands::compare(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_usage() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}
