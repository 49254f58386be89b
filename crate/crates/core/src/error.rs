use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("point {x} lies outside the phase space")]
    Domain { x: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("degenerate interval at {0}")]
    Degenerate(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{0} is not an extremum")]
    NotExtremum(f64),
    #[error("map is not monotone on {interval:?} under {n} iterates")]
    NonMonotone { interval: Interval, n: usize },
    #[error("empty instance set")]
    EmptyInstances,
    #[error("map definition: {0}")]
    Parse(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
