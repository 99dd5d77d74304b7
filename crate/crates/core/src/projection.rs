//! Approximate projection onto the doubly stochastic set.
//!
//! Nonnegativity is enforced by thresholding, the unit row/column sums by RAS
//! (Sinkhorn) sweeps. A single sweep normalizes columns first and then rows,
//! so its output has exact row sums and approximate column sums.

use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};
use crate::matrix::SquareMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Column+row sweeps per projection call.
    pub ras_passes: usize,
    /// Target constraint violation for [`iterate_to_tolerance`].
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            ras_passes: 1,
            epsilon: 1e-8,
            max_iters: 10_000,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ras_passes == 0 {
            return Err(Error::InvalidConfig("ras_passes must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Entrywise `max(m_ij, 0)`.
pub fn threshold_nonnegative(m: &SquareMatrix) -> SquareMatrix {
    m.map(|x| x.max(0.0))
}

/// Largest deviation of any row or column sum from 1.
pub fn constraint_violation(m: &SquareMatrix) -> f64 {
    m.row_sums()
        .into_iter()
        .chain(m.col_sums())
        .fold(0.0, |acc, s| acc.max((s - 1.0).abs()))
}

pub fn column_violation(m: &SquareMatrix) -> f64 {
    m.col_sums()
        .into_iter()
        .fold(0.0, |acc, s| acc.max((s - 1.0).abs()))
}

/// One RAS sweep: divide every column by its sum, then every row by its sum.
pub fn ras_pass(m: &SquareMatrix) -> Result<SquareMatrix> {
    let mut out = m.clone();
    ras_pass_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn ras_pass_in_place(m: &mut SquareMatrix) -> Result<()> {
    let n = m.n();
    let cols = m.col_sums();
    if let Some(j) = cols.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroSum {
            axis: Axis::Column,
            index: j,
        });
    }
    let data = m.as_mut_slice();
    for i in 0..n {
        for (x, s) in data[i * n..(i + 1) * n].iter_mut().zip(&cols) {
            *x /= s;
        }
    }
    for i in 0..n {
        let row = &mut data[i * n..(i + 1) * n];
        let s: f64 = row.iter().sum();
        if !(s > 0.0) {
            return Err(Error::ZeroSum {
                axis: Axis::Row,
                index: i,
            });
        }
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    Ok(())
}

/// Applies `cfg.ras_passes` sweeps.
pub fn project(m: &SquareMatrix, cfg: &ProjectionConfig) -> Result<SquareMatrix> {
    let mut out = m.clone();
    for _ in 0..cfg.ras_passes {
        ras_pass_in_place(&mut out)?;
    }
    Ok(out)
}

/// Repeats [`ras_pass`] until every row and column sum is within
/// `cfg.epsilon` of 1. Returns the scaled matrix and the number of sweeps.
///
/// Convergence is classical for strictly positive input; for matrices
/// without total support the loop may hit `cfg.max_iters`, in which case the
/// last iterate is returned inside [`Error::NoConvergence`].
pub fn iterate_to_tolerance(
    m: &SquareMatrix,
    cfg: &ProjectionConfig,
) -> Result<(SquareMatrix, usize)> {
    cfg.validate()?;
    let mut current = m.clone();
    let mut violation = constraint_violation(&current);
    if violation <= cfg.epsilon {
        return Ok((current, 0));
    }
    for iter in 1..=cfg.max_iters {
        ras_pass_in_place(&mut current)?;
        violation = constraint_violation(&current);
        if violation <= cfg.epsilon {
            return Ok((current, iter));
        }
    }
    Err(Error::NoConvergence {
        best: Box::new(current),
        iterations: cfg.max_iters,
        violation,
    })
}

/// Orthogonal projection onto `{M : M·1 = 1, Mᵀ·1 = 1}` (entries unconstrained).
fn project_affine(x: &SquareMatrix) -> SquareMatrix {
    let n = x.n();
    let nf = n as f64;
    let r: Vec<f64> = x.row_sums().into_iter().map(|s| s - 1.0).collect();
    let c: Vec<f64> = x.col_sums().into_iter().map(|s| s - 1.0).collect();
    let total: f64 = r.iter().sum();
    SquareMatrix::from_fn(n, |i, j| {
        x[(i, j)] - r[i] / nf - c[j] / nf + total / (nf * nf)
    })
}

/// Exact Euclidean projection onto the doubly stochastic set by Dykstra's
/// alternating projections between the affine marginal constraints and the
/// nonnegative orthant.
///
/// Stops once an iterate is nonnegative with violation `≤ cfg.epsilon` and
/// has stopped moving; errors with [`Error::NoConvergence`] after
/// `cfg.max_iters` rounds.
pub fn project_birkhoff_euclidean(
    m: &SquareMatrix,
    cfg: &ProjectionConfig,
) -> Result<SquareMatrix> {
    cfg.validate()?;
    let n = m.n();
    let mut x = m.clone();
    let mut p = SquareMatrix::zeros(n);
    let mut violation = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let y = project_affine(&x);
        let shifted = y.add(&p)?;
        let next = threshold_nonnegative(&shifted);
        p = shifted.sub(&next)?;
        let moved = next.sub(&x)?.max_abs();
        x = next;
        violation = constraint_violation(&x);
        if violation <= cfg.epsilon && moved <= cfg.epsilon {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        best: Box::new(x),
        iterations: cfg.max_iters,
        violation,
    })
}
