use std::fmt;

use thiserror::Error;

use crate::matrix::SquareMatrix;

/// Row or column of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Row => write!(f, "row"),
            Axis::Column => write!(f, "column"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not a permutation matrix: {0}")]
    NotAPermutation(String),

    #[error("invalid permutation map: {0}")]
    InvalidPermutation(String),

    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("{axis} {index} sums to zero")]
    ZeroSum { axis: Axis, index: usize },

    #[error("matrix scaling did not reach tolerance after {iterations} passes (violation {violation:e})")]
    NoConvergence {
        best: Box<SquareMatrix>,
        iterations: usize,
        violation: f64,
    },

    #[error("rows {rows:?} share argmax column {col}")]
    Collision { rows: Vec<usize>, col: usize },

    #[error("dimension {n} exceeds the exhaustive-search limit {max}")]
    TooLarge { n: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Run(Box<crate::optimizer::RunFailure>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<crate::optimizer::RunFailure> for Error {
    fn from(failure: crate::optimizer::RunFailure) -> Self {
        Error::Run(Box::new(failure))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
