use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("length mismatch: trajectory has {walk} monomers but {charges} charges were given")]
    LengthMismatch { walk: usize, charges: usize },

    #[error("enumeration of {states} states exceeds the budget of {budget}")]
    BudgetExceeded { states: u128, budget: u128 },

    #[error("quadrature failed to resolve m = {m}: {reason}")]
    Quadrature { m: usize, reason: String },

    #[error("tolerance {tol:e} unreachable with N <= {max_terms} terms (tail bound {bound:e})")]
    ToleranceUnreachable { tol: f64, max_terms: usize, bound: f64 },

    #[error("all {particles} splitting particles died at checkpoint {checkpoint}")]
    Extinction { particles: usize, checkpoint: usize },

    #[error("{factor} factor failed: {reason}")]
    StrategyFactor { factor: &'static str, reason: String },

    #[error("numeric overflow in sample {sample}: exponent {exponent}")]
    Overflow { sample: usize, exponent: f64 },

    #[error("weight table covers local times up to {l_max} but {needed} was requested")]
    TableTooSmall { l_max: usize, needed: usize },

    #[error("cache audit mismatch at step {step}: {detail}")]
    CacheAudit { step: u64, detail: String },

    #[error("integration step [{lo}, {hi}] rejected: curvature estimate {curvature:e} exceeds tolerance")]
    IntegrationRejected { lo: f64, hi: f64, curvature: f64 },

    #[error("no qualifying walks among {walks} samples")]
    NoQualifyingWalks { walks: usize },

    #[error("fit needs at least {needed} points with distinct abscissas, got {got}")]
    DegenerateFit { needed: usize, got: usize },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
