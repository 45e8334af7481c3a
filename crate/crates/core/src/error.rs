use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("factor `{0}` has an empty level set")]
    EmptyLevels(String),
    #[error("formula: {0}")]
    Formula(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid structure: {0}")]
    Structure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("posterior propriety not established: {0}")]
    ImproperPosterior(String),
    #[error("non-finite draw in chain {chain} at iteration {iteration}: {what}")]
    NonFiniteDraw {
        chain: usize,
        iteration: usize,
        what: String,
    },
    #[error("too few draws: need at least {needed}, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("all fits failed: {0}")]
    AllFitsFailed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
