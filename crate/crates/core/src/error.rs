use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on unit {0}")]
    SelfLoop(usize),

    #[error("unit index {index} out of range for {n} units")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("asymmetric distance input at ({i}, {j})")]
    AsymmetricDistances { i: usize, j: usize },

    #[error("invalid distance input: {0}")]
    InvalidDistances(String),

    #[error("neighborhood size {l} exceeds unit count {n}")]
    NeighborhoodTooLarge { l: usize, n: usize },

    #[error("missing covariate column `{0}`")]
    MissingCovariate(String),

    #[error("invalid statistic set: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ineligible dyad ({i}, {j})")]
    IneligibleDyad { i: usize, j: usize },

    #[error("network contains an edge outside the restricted space")]
    OutsideRestrictedSpace,

    #[error("too many eligible dyads for enumeration: {count} (limit {max})")]
    TooManyDyads { count: usize, max: usize },

    #[error("degenerate pseudo-likelihood: separating direction {direction:?}")]
    DegeneratePseudoLikelihood { direction: Vec<f64> },

    #[error("model degeneracy suspected: observed statistics outside simulated range for {0} consecutive iterations")]
    ModelDegeneracy(usize),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("Omega factorization failed after ridge repair")]
    Factorization,

    #[error("empty draw list")]
    EmptyDraws,

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("nonpositive denominator for unit {0}")]
    NonPositiveDenominator(usize),

    #[error("zero total weight")]
    ZeroTotalWeight,

    #[error("insufficient replicates: {0} (need at least 2)")]
    InsufficientReplicates(usize),

    #[error("exact computation infeasible: {0}")]
    ExactInfeasible(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegeneratePseudoLikelihood { .. }
                | Error::ModelDegeneracy(_)
                | Error::Singular(_)
                | Error::Factorization
                | Error::NonPositiveDenominator(_)
                | Error::ZeroTotalWeight
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
