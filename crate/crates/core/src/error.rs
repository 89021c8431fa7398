use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{0} is identically zero")]
    ZeroData(&'static str),

    #[error(
        "long-term initialization needs a full-row-rank X: at least N = {n} data points must \
         have been collected and be linearly independent ({detail})"
    )]
    NotFullRowRank { n: usize, detail: String },

    #[error("matrix is too ill-conditioned to invert (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("only {feasible} of the {requested} requested disjoint sensing regions fit in the workspace")]
    Infeasible { requested: usize, feasible: usize },

    #[error("eigenvalue {index} is zero; its continuous-time logarithm is undefined")]
    ZeroEigenvalue { index: usize },

    #[error("search space of {size} combinations exceeds the exhaustive limit {limit}")]
    SizeGuard { size: u128, limit: u128 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
