use std::fmt;

use thiserror::Error;

/// The specific way a distance matrix fails to be a metric.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricViolation {
    NotSquare { rows: usize, cols: usize },
    NonFinite { i: usize, j: usize, value: f64 },
    NonzeroDiagonal { i: usize, value: f64 },
    NonpositiveOffDiagonal { i: usize, j: usize, value: f64 },
    Asymmetric { i: usize, j: usize, forward: f64, backward: f64 },
    /// `dist[i][k] > dist[i][j] + dist[j][k]`.
    Triangle { i: usize, j: usize, k: usize, direct: f64, detour: f64 },
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MetricViolation::NotSquare { rows, cols } => {
                write!(f, "distance matrix is {rows}x{cols}, expected square")
            }
            MetricViolation::NonFinite { i, j, value } => {
                write!(f, "dist[{i}][{j}] = {value} is not finite")
            }
            MetricViolation::NonzeroDiagonal { i, value } => {
                write!(f, "dist[{i}][{i}] = {value}, expected 0")
            }
            MetricViolation::NonpositiveOffDiagonal { i, j, value } => {
                write!(f, "dist[{i}][{j}] = {value} must be > 0 for distinct points")
            }
            MetricViolation::Asymmetric { i, j, forward, backward } => {
                write!(f, "asymmetric: dist[{i}][{j}] = {forward} but dist[{j}][{i}] = {backward}")
            }
            MetricViolation::Triangle { i, j, k, direct, detour } => write!(
                f,
                "triangle inequality fails for ({i}, {j}, {k}): dist[{i}][{k}] = {direct} > \
                 dist[{i}][{j}] + dist[{j}][{k}] = {detour}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("metric violation: {0}")]
    Metric(MetricViolation),

    #[error("reference weight m[{index}] = {value} is not strictly positive")]
    NonpositiveReference { index: usize, value: f64 },

    #[error("measure weight {value} at point {index} is negative or not finite")]
    InvalidWeight { index: usize, value: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("dominating measure vanishes at point {index} where the measures carry mass")]
    NonDominating { index: usize },

    #[error("mass mismatch: total masses {mass0} and {mass1} differ")]
    MassMismatch { mass0: f64, mass1: f64 },

    #[error("measures have zero total mass")]
    ZeroMass,

    #[error("positions must be strictly increasing and finite")]
    UnsortedPositions,

    #[error("grid spacing is not uniform: {0}")]
    NonuniformGrid(String),

    #[error("negative time t = {0}")]
    NegativeTime(f64),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("integrand is not convex: {0}")]
    NotConvex(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<MetricViolation> for Error {
    fn from(v: MetricViolation) -> Self {
        Error::Metric(v)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeTime(t))
    }
}
