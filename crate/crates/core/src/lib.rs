//! Learning permutations through an exact, Lipschitz-continuous relaxation.
//!
//! A permutation is relaxed to a nonnegative matrix kept near the doubly
//! stochastic set by thresholding and RAS scaling; the matrix l1-2 penalty
//! ([`penalty::penalty_value`]) vanishes on that set exactly at permutation
//! matrices. [`optimizer::run`] minimizes `L + λP` by projected gradient
//! descent and rounds the result with an exact assignment solver.
//!
//! Problem suites: graph matching / QAP ([`qap`]), the one-parameter
//! analytic landscapes ([`closed_form`]) and a synthetic shuffle-recovery
//! task ([`shuffle`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod matrix;
pub mod optimizer;
pub mod penalty;
pub mod projection;
pub mod qap;
pub mod rounding;
pub mod shuffle;
pub mod suites;
pub mod trace;

pub use error::{Axis, Error, Result};
pub use matrix::{
    frobenius_distance, matrix_to_permutation, permutation_to_matrix, Permutation,
    RelaxedPermutation, SquareMatrix,
};
pub use optimizer::{ObjectiveProblem, OptimizationResult, OptimizerConfig};
pub use penalty::{penalty_subgradient, penalty_value, PenaltyConfig};
pub use projection::{iterate_to_tolerance, ras_pass, threshold_nonnegative, ProjectionConfig};
pub use rounding::{nearest_permutation_lap, round_argmax};
pub use trace::TraceRecord;
