use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// Graph is not connected where connectivity is required.
    #[error("connectivity error: {0}")]
    Connectivity(String),

    /// Iterative solver did not reach tolerance.
    #[error(
        "lanczos did not converge after {iterations} iterations (best estimate {estimate}, residual {residual:e})"
    )]
    Convergence { estimate: f64, residual: f64, iterations: usize },

    /// Matrix too large for the dense solver.
    #[error("size error: n = {n} exceeds dense cap {cap}")]
    Size { n: usize, cap: usize },

    /// Distance to nearest adopter is undefined (no adopters in the reference year).
    #[error("undefined distance: no adopters of tech {tech} in year {year}")]
    UndefinedDistance { tech: usize, year: i32 },

    /// Regression could not be estimated.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Invalid configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Simulation could not meet its calibration targets.
    #[error("generation error: {0}")]
    Generation(String),

    /// Too many bootstrap replicates failed.
    #[error("inference error: {failed} of {replicates} replicates failed; first failure: {first}")]
    Inference { failed: usize, replicates: usize, first: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
