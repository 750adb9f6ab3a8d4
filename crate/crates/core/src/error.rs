use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what}: argument {value} outside domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("non-finite value {value} in {context} at node {index} (x = {at})")]
    NonFinite {
        context: &'static str,
        index: usize,
        at: f64,
        value: f64,
    },

    #[error("ill-conditioned system (condition estimate {condition:.3e}); change the basis or the quadrature")]
    IllConditioned { condition: f64 },

    #[error("matrix is not symmetric positive definite (pivot {pivot} = {value:.3e})")]
    NotSpd { pivot: usize, value: f64 },

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} at ({row}, {col}))")]
    NotSymmetric { row: usize, col: usize, asymmetry: f64 },

    #[error("map is not monotone: diagonal derivative {derivative:.3e} at x = {at}")]
    NotMonotone { at: f64, derivative: f64 },

    #[error("no bracket found for target {target} after {doublings} doublings")]
    Range { target: f64, doublings: usize },

    #[error("objective became non-finite after {iterations} iterations")]
    Optimization {
        iterations: usize,
        last_good: Vec<f64>,
        last_value: f64,
    },

    #[error("insufficient data: {usable} usable rows, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },

    #[error("divergence integral is not finite: {0}")]
    Divergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
