use thiserror::Error;

/// Errors raised across the reconstruction, bound and filtering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix contains non-finite entries: {0}")]
    NonFinite(&'static str),

    #[error("generalized eigenvectors do not span the state space (smallest relative singular value {0:.3e})")]
    DefectiveTolerance(f64),

    #[error("basis matrix is rank deficient (smallest relative singular value {0:.3e})")]
    RankDeficient(f64),

    #[error("data window holds {outputs} output samples, at least {required} are needed")]
    WindowTooShort { outputs: usize, required: usize },

    #[error("no plausible state is consistent with the data under the attack budget")]
    NoPlausibleState,

    #[error("subspace {0} has no candidate substate passing the vote threshold")]
    EmptySubspace(usize),

    #[error("majority assumption violated in subspace {subspace}: winner has {votes} votes, need more than {s}")]
    AssumptionViolated { subspace: usize, votes: usize, s: usize },

    #[error("CBF constraint admits no input")]
    Infeasible,

    #[error("plausible set is empty")]
    EmptySet,

    #[error("attack budget s = {s} must be smaller than the sensor count p = {p}")]
    Budget { s: usize, p: usize },

    #[error("eigen index q = {q} must be at least s = {s}")]
    IndexBelowBudget { q: usize, s: usize },

    #[error("at most {max} sensors are supported, got {p}")]
    TooManySensors { p: usize, max: usize },

    #[error("safety set is empty: witness violates Hx + g >= 0")]
    EmptySafetySet,

    #[error("system generation failed after {0} attempts")]
    GenerationRetryExceeded(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("unsupported scenario version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
