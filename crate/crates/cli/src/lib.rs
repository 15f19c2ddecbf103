//! `edgecause` command-line front end. [`dispatch`] runs one invocation
//! in-process and returns its exit code.

mod commands;
mod data;
pub mod manifest;
pub mod oracle;

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use edgecause_core::error::Error;

pub use manifest::{replay, RunManifest};
pub use oracle::{oracle_check, OracleReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "edgecause", version, about = "Design-based causal inference for edge interventions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct GlobalArgs {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Confidence level for intervals and coverage.
    #[arg(long, global = true, default_value_t = 0.95)]
    pub level: f64,
    /// Use continuous covariates as given instead of standardizing them.
    #[arg(long, global = true)]
    pub no_standardize: bool,
    /// Whether `l` counts the unit itself (|N_i| = l) or not (|N_i| = l + 1).
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set, value_name = "BOOL")]
    pub nbhd_includes_self_in_count: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the treatment ERGM by Monte Carlo maximum likelihood.
    Fit(FitArgs),
    /// IPW estimates of the intervention mean over a λ grid.
    Estimate(EstimateArgs),
    /// Run a synthetic replication study and write its summary.
    Simulate(SimulateArgs),
    /// Goodness-of-fit draws: statistics and degree distributions.
    Gof(GofArgs),
    /// Cross-check sampler, marginals and weights against exact enumeration.
    Oracle(OracleArgs),
    /// Re-run a manifest and verify the output digest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Estimate(_) => "estimate",
            Command::Simulate(_) => "simulate",
            Command::Gof(_) => "gof",
            Command::Oracle(_) => "oracle",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct ModelInputs {
    #[arg(long)]
    pub nodes: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Headerless n×n distance matrix; overrides loc_x/loc_y.
    #[arg(long)]
    pub distances: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    #[arg(long)]
    pub edges: PathBuf,
    /// Statistic draws per iteration.
    #[arg(long, default_value_t = 5000)]
    pub draws: usize,
    #[arg(long, default_value_t = 30)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value = "y")]
    pub outcome_col: String,
    #[arg(long, default_value_t = 3)]
    pub nbhd_l: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_grid: Option<String>,
    /// Draws for Monte Carlo denominators (dyad-dependent models only).
    #[arg(long, default_value_t = 20_000)]
    pub mc_samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub l: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_grid: Option<String>,
    /// Require exact truth (fails when enumeration is infeasible).
    #[arg(long)]
    pub exact_truth: bool,
    /// Monte Carlo draws for the truth when it is not exact.
    #[arg(long)]
    pub truth_draws: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub block_mean_size: usize,
    /// Eligibility distance cutoff; `none` makes every pair eligible.
    #[arg(long, default_value = "0.2")]
    pub cutoff: String,
    /// Re-fit η in each replication (default: on for bernoulli, off for localdep).
    #[arg(long, action = ArgAction::Set, value_name = "BOOL")]
    pub refit: Option<bool>,
    #[arg(long, default_value_t = 2000)]
    pub fit_draws: usize,
    #[arg(long, default_value_t = 20_000)]
    pub mc_samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct GofArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Observed network, written as the first row when given.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub sims: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Parameter vector from `fit`; defaults to zeros unless `--eta` is given.
    #[arg(long, conflicts_with = "eta")]
    pub fit: Option<PathBuf>,
    /// Comma-separated parameter vector.
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub nbhd_l: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_grid: Option<String>,
    /// Baseline outcome column; zeros when absent.
    #[arg(long)]
    pub outcome_col: Option<String>,
    /// Outcome shift per edge between a unit and a neighbour.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub edge_effect: f64,
    /// Sampler proposals after burn-in.
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 10)]
    pub thin: u64,
    #[arg(long, default_value_t = 10_000)]
    pub burn_in: u64,
    /// Refuse models with more eligible dyads than this.
    #[arg(long, default_value_t = 22)]
    pub max_dyads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write the rerun output here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn dispatch(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(cli, &argv[1..]) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli, args: &[String]) -> Result<(), Error> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cli.global.threads {
            if t == 0 {
                return Err(Error::InvalidConfig("--threads must be at least 1".into()));
            }
            b = b.num_threads(t);
        }
        b.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
    };
    if !(cli.global.level > 0.0 && cli.global.level < 1.0) {
        return Err(Error::InvalidConfig("--level must be in (0,1)".into()));
    }
    pool.install(|| commands::execute(&cli, args))
}
