use thiserror::Error;

/// Errors surfaced by model construction, data ingestion and sampling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("unknown block id {0}")]
    UnknownBlock(usize),
    #[error("matrix not positive definite ({context}, pivot {pivot})")]
    NotPositiveDefinite { context: String, pivot: usize },
    #[error("duplicate locations at rows {first} and {second}")]
    DuplicateLocation { first: usize, second: usize },
    #[error("observation {value} outside the support of the {family} family")]
    OutOfSupport { family: &'static str, value: f64 },
    #[error("too few draws: need at least {need}, got {got}")]
    TooFewDraws { need: usize, got: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("data line {line}: {msg}")]
    Data { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
