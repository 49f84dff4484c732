use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid stochastic kernel: {0}")]
    InvalidKernel(String),

    #[error("{0} must have full support (interior of the simplex)")]
    NotInterior(&'static str),

    #[error("{what} = {value} is out of range ({allowed})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        allowed: &'static str,
    },

    #[error("column {index} carries zero mass")]
    ZeroMass { index: usize },

    #[error("block {index} of the coarse graining has zero source mass")]
    EmptyBlock { index: usize },

    #[error("rate {rate} is unattainable (maximum {max})")]
    Unattainable { rate: f64, max: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("row {row} has no admissible entry")]
    EmptyRow { row: usize },

    #[error("{0}")]
    InvalidArgument(String),
}
