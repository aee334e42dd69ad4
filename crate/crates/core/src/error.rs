use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotSpd { row: usize, pivot: f64 },
    #[error("constraint Jacobian is rank deficient (pivot ratio {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("root search for the step bound did not converge")]
    NonConvergent,
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("malformed line {line}: `{text}`")]
    MalformedLine { line: usize, text: String },
    #[error("non-binary label `{label}` on line {line}")]
    NonBinaryLabel { line: usize, label: String },
    #[error("batch size {batch} exceeds pool size {pool}")]
    BatchTooLarge { batch: usize, pool: usize },
    #[error("all sampled point pairs coincide")]
    DegenerateSamples,
    #[error("run produced no iterates")]
    EmptyRun,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error signals a broken algorithmic invariant rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::InvariantViolated(_))
    }
}
