use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid block {index}: {reason}")]
    InvalidBlock { index: usize, reason: String },

    #[error("blocks do not tile the domain: {0}")]
    NonTiling(String),

    #[error("{n} not divisible by {ratio}")]
    NotDivisible { n: usize, ratio: usize },

    #[error("permeability must be positive, got ({kxx}, {kyy}) at ({x}, {y})")]
    NonPositivePermeability { x: f64, y: f64, kxx: f64, kyy: f64 },

    #[error("linear solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("block-Jacobi did not converge in {iterations} sweeps (last mismatch {last:e})")]
    BlockJacobiDiverged { iterations: usize, last: f64, history: Vec<f64> },

    #[error("unknown manufactured case {0:?}")]
    UnknownCase(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Parse { path: String, reason: String },
}
