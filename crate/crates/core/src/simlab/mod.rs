//! Simulation laboratory: synthetic studies with known truth, replication
//! loops and bias/RMSE/SE/coverage summaries.

mod dgp;
mod study;
mod truth;

pub use dgp::{generate_dgp, LinearOutcomes, PotentialOutcomes, SyntheticStudy};
pub use study::{emit_summary, run_study, write_summary, RepEstimate, ReplicateRecord, StudyMetadata, StudySummary, SummaryRow};
pub use truth::{exact_theta, mc_theta, true_theta, true_theta_grid, TruthValue};

use crate::error::{Error, Result};

/// `{−log 2, −log 1.5, 0, log 1.5, log 2}`.
pub fn default_lambda_grid() -> Vec<f64> {
    let (a, b) = (2f64.ln(), 1.5f64.ln());
    vec![-a, -b, 0.0, b, a]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Dyad-independent edges/nodecov model.
    Bernoulli,
    /// Block-structured model with GWESP inside blocks.
    LocalDependence,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Bernoulli => "bernoulli",
            Scenario::LocalDependence => "localdep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(Scenario::Bernoulli),
            "localdep" => Ok(Scenario::LocalDependence),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Edge effect in the potential outcomes: `Y_i` gains `c_j` for each edge
/// between `i` and a neighbour `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Interaction {
    /// `c_j = X_{j1} + X_{j2}`.
    Covariates,
    /// The same `c` for every edge.
    PerEdge(f64),
    /// Outcomes ignore the network.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TruthPrecision {
    /// Exact when every local support can be enumerated, otherwise Monte
    /// Carlo with [`DEFAULT_TRUTH_DRAWS`] draws.
    Auto,
    Exact,
    MonteCarlo(usize),
}

pub const DEFAULT_TRUTH_DRAWS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct DgpConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub l: usize,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub reps: usize,
    pub block_mean_size: usize,
    /// Eligibility cutoff on distance; `None` makes every pair eligible.
    pub cutoff: Option<f64>,
    pub interaction: Interaction,
    /// Whether `l` counts unit `i` itself (`|N_i| = l`) or not (`|N_i| = l + 1`).
    pub nbhd_includes_self: bool,
    /// Re-fit η in every replication; `None` means on for the Bernoulli
    /// scenario and off for local dependence.
    pub refit: Option<bool>,
    pub fit_draws: usize,
    /// Draws for Monte Carlo denominators when they have no closed form.
    pub mc_samples: usize,
    pub truth: TruthPrecision,
    pub level: f64,
}

impl DgpConfig {
    pub fn new(scenario: Scenario, n: usize, l: usize) -> Self {
        DgpConfig {
            scenario,
            n,
            l,
            seed: 0,
            lambda_grid: default_lambda_grid(),
            reps: 1000,
            block_mean_size: 50,
            cutoff: Some(0.2),
            interaction: Interaction::Covariates,
            nbhd_includes_self: true,
            refit: None,
            fit_draws: 2000,
            mc_samples: 20_000,
            truth: TruthPrecision::Auto,
            level: 0.95,
        }
    }

    pub fn refit_enabled(&self) -> bool {
        self.refit.unwrap_or(self.scenario == Scenario::Bernoulli)
    }

    /// Number of units in each `N_i`.
    pub fn nbhd_size(&self) -> usize {
        if self.nbhd_includes_self {
            self.l
        } else {
            self.l + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.nbhd_size() > self.n {
            return Err(Error::InvalidConfig(format!("need n ≥ l ≥ 1, got n = {}, l = {}", self.n, self.l)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.block_mean_size == 0 {
            return Err(Error::InvalidConfig("block_mean_size must be positive".into()));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidConfig("lambda grid must be non-empty and finite".into()));
        }
        if self.cutoff.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::InvalidConfig("distance cutoff must be positive".into()));
        }
        if self.fit_draws < 2 || self.mc_samples == 0 {
            return Err(Error::InvalidConfig("fit_draws must be ≥ 2 and mc_samples ≥ 1".into()));
        }
        if matches!(self.truth, TruthPrecision::MonteCarlo(m) if m < 2) {
            return Err(Error::InvalidConfig("Monte Carlo truth needs at least 2 draws".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig("level must be in (0,1)".into()));
        }
        Ok(())
    }
}
