use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model not certified: {0}")]
    Uncertified(String),

    #[error("singular step matrix at elimination column {column} (time step {step})")]
    SingularStep { step: usize, column: usize },

    #[error("instability at time step {step}: norm grew by factor {growth:.3e} (limit {limit})")]
    Unstable { step: usize, growth: f64, limit: f64 },

    #[error("initial datum does not match the requested extension kind: {0}")]
    DatumMismatch(String),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("reconstruction aborted after {iterations} iterations: {reason}")]
    ReconstructionAborted { iterations: usize, reason: String },

    #[error("perturbation `{label}`: {source}")]
    Perturbation {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("record parse error on line {line}: {message}")]
    Record { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
