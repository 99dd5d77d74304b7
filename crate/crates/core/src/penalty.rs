//! Matrix l1-2 penalty: the sum over all rows and columns of `‖v‖₁ − ‖v‖₂`.
//!
//! On the doubly stochastic set the penalty vanishes exactly at permutation
//! matrices, and every row/column term is a nonnegative Cauchy–Schwarz gap.
//! The full l1 sums are kept because the row and column constraints only hold
//! approximately while optimizing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

pub const DEFAULT_NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Weight of the penalty in the training objective.
    pub lambda: f64,
    /// l2 norms below this contribute nothing to the subgradient.
    pub norm_guard: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64, norm_guard: f64) -> Result<Self> {
        let cfg = Self { lambda, norm_guard };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.norm_guard > 0.0 && self.norm_guard <= 1e-6) {
            return Err(Error::InvalidConfig(format!(
                "norm_guard must lie in (0, 1e-6], got {}",
                self.norm_guard
            )));
        }
        Ok(())
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            norm_guard: DEFAULT_NORM_GUARD,
        }
    }
}

fn row_norms(m: &SquareMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.n();
    let mut l1 = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for i in 0..n {
        for &x in m.row(i) {
            l1[i] += x.abs();
            sq[i] += x * x;
        }
    }
    (l1, sq.into_iter().map(f64::sqrt).collect())
}

fn col_norms(m: &SquareMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.n();
    let mut l1 = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for i in 0..n {
        for (j, &x) in m.row(i).iter().enumerate() {
            l1[j] += x.abs();
            sq[j] += x * x;
        }
    }
    (l1, sq.into_iter().map(f64::sqrt).collect())
}

/// `P(M) = Σ_rows (‖r‖₁ − ‖r‖₂) + Σ_cols (‖c‖₁ − ‖c‖₂)`.
pub fn penalty_value(m: &SquareMatrix) -> f64 {
    let (rl1, rl2) = row_norms(m);
    let (cl1, cl2) = col_norms(m);
    let rows: f64 = rl1.iter().zip(&rl2).map(|(a, b)| a - b).sum();
    let cols: f64 = cl1.iter().zip(&cl2).map(|(a, b)| a - b).sum();
    rows + cols
}

/// A subgradient of `P` at `m` (the weight `cfg.lambda` is not applied).
///
/// Entry `(i, j)` is `2·sign(m_ij) − m_ij/‖row_i‖₂ − m_ij/‖col_j‖₂` with
/// `sign(0) = 0`; a norm below `cfg.norm_guard` drops its term.
pub fn penalty_subgradient(m: &SquareMatrix, cfg: &PenaltyConfig) -> SquareMatrix {
    let (_, rl2) = row_norms(m);
    let (_, cl2) = col_norms(m);
    let inv = |norm: f64| {
        if norm < cfg.norm_guard {
            0.0
        } else {
            1.0 / norm
        }
    };
    let rinv: Vec<f64> = rl2.into_iter().map(inv).collect();
    let cinv: Vec<f64> = cl2.into_iter().map(inv).collect();
    SquareMatrix::from_fn(m.n(), |i, j| {
        let x = m[(i, j)];
        let sign = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        2.0 * sign - x * rinv[i] - x * cinv[j]
    })
}
