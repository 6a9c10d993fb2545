use thiserror::Error;

/// Errors raised by the simulation, estimation and reporting layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("covariance not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("design is rank deficient: effective rank {rank} < {columns} columns")]
    RankDeficient { rank: usize, columns: usize },

    #[error("too few observations: {n_obs} rows for {n_params} parameters")]
    TooFewObservations { n_obs: usize, n_params: usize },

    #[error("standard error underflows for column {column} (perfect fit)")]
    ZeroVariance { column: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("column {column} is constant and cannot be standardized")]
    ConstantColumn { column: usize },

    #[error("response has zero variance")]
    DegenerateResponse,

    #[error("treatment residuals have zero variance")]
    DegenerateResiduals,

    #[error("lasso did not converge after {iterations} sweeps (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("series `{0}` is missing or empty")]
    MissingSeries(String),

    #[error("i/o error: {0}")]
    Io(String),

    /// A failure read back from a per-replication file; only the message
    /// survives the round trip.
    #[error("{0}")]
    Recorded(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
