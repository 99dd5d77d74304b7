//! Synthetic shuffle recovery: a hidden permutation sits between two linear
//! maps, `y = w2 · P* · w1 · x (+ noise)`, and is learned from input/output
//! pairs by the penalized optimizer.
//!
//! With the maps fixed the loss is quadratic in `M`:
//! `L(M) = tr(Mᵀ G M C) − 2⟨M, D⟩ + c₀` where `C = mean(z zᵀ)` for
//! `z = w1·x`, `G = w2ᵀ w2`, `D = w2ᵀ mean(y zᵀ)` and `c₀ = mean(‖y‖²)`, so
//! evaluating it never touches the samples again.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{permutation_to_matrix, Permutation, SquareMatrix};
use crate::optimizer::{run_restarts, Gradient, ObjectiveProblem, OptimizerConfig, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleTask {
    pub n: usize,
    pub w1: SquareMatrix,
    pub w2: SquareMatrix,
    pub p_star: Permutation,
    pub samples: usize,
    pub noise_std: f64,
}

/// Training pairs, one vector per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

fn mat_vec(m: &SquareMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.n())
        .map(|i| m.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn gaussian_matrix(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
    SquareMatrix::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draws `w1`, `w2` with standard normal entries, a uniformly random `P*`,
/// standard normal inputs and `y = w2 P* w1 x + noise_std · N(0, I)`.
pub fn generate_task(
    n: usize,
    samples: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(ShuffleTask, Dataset)> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("n must be >= 2, got {n}")));
    }
    if samples < 10 * n {
        return Err(Error::InvalidConfig(format!(
            "need at least 10·n = {} samples, got {samples}",
            10 * n
        )));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise_std must be finite and >= 0, got {noise_std}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = gaussian_matrix(n, &mut rng);
    let w2 = gaussian_matrix(n, &mut rng);
    let mut map: Vec<usize> = (0..n).collect();
    map.shuffle(&mut rng);
    let p_star = Permutation::new(map)?;
    let teacher = w2.matmul(&permutation_to_matrix(&p_star))?.matmul(&w1)?;

    let mut x = Vec::with_capacity(samples);
    let mut y = Vec::with_capacity(samples);
    for _ in 0..samples {
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut ys = mat_vec(&teacher, &xs);
        if noise_std > 0.0 {
            for v in &mut ys {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += noise_std * e;
            }
        }
        x.push(xs);
        y.push(ys);
    }
    let task = ShuffleTask {
        n,
        w1,
        w2,
        p_star,
        samples,
        noise_std,
    };
    Ok((task, Dataset { x, y }))
}

/// Mean squared error of `w2 M w1 x` against `y`, as an optimizer objective
/// over one `n×n` matrix.
///
/// With `learn_w2` the second map is also a variable, carried in the
/// optimizer weights (row-major `n²` entries), and the fixed `w2` is only
/// used by [`ShuffleObjective::loss_at`].
#[derive(Debug, Clone)]
pub struct ShuffleObjective {
    n: usize,
    w2: SquareMatrix,
    /// `mean(z zᵀ)`.
    c: SquareMatrix,
    /// `mean(y zᵀ)`.
    e: SquareMatrix,
    /// `mean(‖y‖²)`.
    c0: f64,
    learn_w2: bool,
}

/// Builds the objective for `task` and `data` with the maps held fixed.
pub fn shuffle_objective(task: &ShuffleTask, data: &Dataset) -> Result<ShuffleObjective> {
    let n = task.n;
    if data.x.len() != data.y.len() || data.x.is_empty() {
        return Err(Error::InvalidConfig(
            "dataset needs matching, nonempty x and y".into(),
        ));
    }
    let s = data.x.len() as f64;
    let mut c = SquareMatrix::zeros(n);
    let mut e = SquareMatrix::zeros(n);
    let mut c0 = 0.0;
    for (x, y) in data.x.iter().zip(&data.y) {
        if x.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len().max(y.len()),
            });
        }
        let z = mat_vec(&task.w1, x);
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] += z[i] * z[j];
                e[(i, j)] += y[i] * z[j];
            }
        }
        c0 += y.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(ShuffleObjective {
        n,
        w2: task.w2.clone(),
        c: c.scale(1.0 / s),
        e: e.scale(1.0 / s),
        c0: c0 / s,
        learn_w2: false,
    })
}

impl ShuffleObjective {
    /// Also learn `w2`, starting from the optimizer's random weights.
    pub fn with_learned_w2(mut self, learn: bool) -> Self {
        self.learn_w2 = learn;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn w2_from(&self, weights: &[f64]) -> SquareMatrix {
        if self.learn_w2 {
            SquareMatrix::from_vec(self.n, weights.to_vec()).expect("weights have n² entries")
        } else {
            self.w2.clone()
        }
    }

    fn loss_with(&self, w2: &SquareMatrix, m: &SquareMatrix) -> f64 {
        let a = w2.matmul(m).expect("dimensions fixed at construction");
        let quad = a.matmul(&self.c).expect("square").dot(&a).expect("square");
        let lin = a.dot(&self.e).expect("square");
        (quad - 2.0 * lin + self.c0).max(0.0)
    }

    /// Loss at `m` with the fixed teacher map `w2`.
    pub fn loss_at(&self, m: &SquareMatrix) -> Result<f64> {
        m.ensure_same_dim(&self.c)?;
        Ok(self.loss_with(&self.w2, m))
    }

    /// Gradient in `m` with the fixed `w2`: `2 w2ᵀ (w2 M C − E)`.
    pub fn gradient_at(&self, m: &SquareMatrix) -> Result<SquareMatrix> {
        m.ensure_same_dim(&self.c)?;
        Ok(self.gradients(&self.w2, m).1)
    }

    /// `(∇_{w2}, ∇_M)`.
    fn gradients(&self, w2: &SquareMatrix, m: &SquareMatrix) -> (SquareMatrix, SquareMatrix) {
        let mc = m.matmul(&self.c).expect("square");
        let r = w2
            .matmul(&mc)
            .expect("square")
            .sub(&self.e)
            .expect("square");
        let grad_m = w2.transpose().matmul(&r).expect("square").scale(2.0);
        let grad_w2 = r.matmul(&m.transpose()).expect("square").scale(2.0);
        (grad_w2, grad_m)
    }

    /// Curvature bound `2 ‖w2ᵀw2‖₂ ‖C‖₂` of the loss in `M`.
    pub fn lipschitz(&self) -> f64 {
        let g = self.w2.transpose().matmul(&self.w2).expect("square");
        2.0 * g.spectral_norm() * self.c.spectral_norm()
    }
}

impl ObjectiveProblem for ShuffleObjective {
    fn dimensions(&self) -> Vec<usize> {
        vec![self.n]
    }

    fn weight_dimension(&self) -> usize {
        if self.learn_w2 {
            self.n * self.n
        } else {
            0
        }
    }

    fn loss(&self, weights: &[f64], matrices: &[SquareMatrix]) -> f64 {
        self.loss_with(&self.w2_from(weights), &matrices[0])
    }

    fn loss_gradient(&self, weights: &[f64], matrices: &[SquareMatrix]) -> Gradient {
        let w2 = self.w2_from(weights);
        let (gw, gm) = self.gradients(&w2, &matrices[0]);
        Gradient {
            weights: if self.learn_w2 {
                gw.into_vec()
            } else {
                Vec::new()
            },
            matrices: vec![gm],
        }
    }
}

/// Penalty weight relative to the loss curvature.
pub const DEFAULT_LAMBDA_FACTOR: f64 = 5e-3;

/// `DEFAULT_LAMBDA_FACTOR · lipschitz`.
pub fn default_lambda(objective: &ShuffleObjective) -> f64 {
    DEFAULT_LAMBDA_FACTOR * objective.lipschitz()
}

/// Step `1/lipschitz`, linear decay, the default penalty weight.
pub fn default_config(objective: &ShuffleObjective) -> OptimizerConfig {
    let lip = objective.lipschitz().max(1e-12);
    OptimizerConfig {
        lambda: default_lambda(objective),
        learning_rate: 1.0 / lip,
        schedule: Schedule::LinearDecay,
        total_iterations: 2000,
        record_every: 50,
        ..OptimizerConfig::default()
    }
}

pub const DEFAULT_RESTARTS: usize = 8;

/// One line of a λ sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// Loss at the relaxed matrix of the selected restart.
    pub relaxed_loss: f64,
    /// Loss at its rounding.
    pub rounded_loss: f64,
    pub penalty: f64,
    pub recovered: bool,
    pub seed: u64,
    /// Set when every restart failed; the numeric columns are then NaN.
    pub error: Option<String>,
}

/// Runs `restarts` seeds per λ and keeps the one with the lowest rounded
/// loss (ties to the lower seed). Failures are recorded and the sweep goes on.
pub fn lambda_sweep(
    task: &ShuffleTask,
    objective: &ShuffleObjective,
    lambdas: &[f64],
    cfg: &OptimizerConfig,
    restarts: usize,
) -> Vec<SweepRow> {
    lambdas
        .par_iter()
        .map(|&lambda| {
            let cfg = OptimizerConfig {
                lambda,
                ..cfg.clone()
            };
            let mut best: Option<SweepRow> = None;
            let mut last_err = None;
            for outcome in run_restarts(objective, &cfg, restarts.max(1)) {
                match outcome {
                    Ok(res) => {
                        let row = SweepRow {
                            lambda,
                            relaxed_loss: res.final_loss,
                            rounded_loss: res.rounded_loss,
                            penalty: res.final_penalty,
                            recovered: res.rounded[0] == task.p_star,
                            seed: res.seed,
                            error: None,
                        };
                        if best
                            .as_ref()
                            .is_none_or(|b| row.rounded_loss < b.rounded_loss)
                        {
                            best = Some(row);
                        }
                    }
                    Err(e) => last_err = Some(e.to_string()),
                }
            }
            best.unwrap_or(SweepRow {
                lambda,
                relaxed_loss: f64::NAN,
                rounded_loss: f64::NAN,
                penalty: f64::NAN,
                recovered: false,
                seed: cfg.seed,
                error: last_err,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "lambda,relaxed_loss,rounded_loss,penalty,recovered";

/// Writes the header and one line per row. Failed rows keep their NaN
/// columns and `recovered = false`.
pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.lambda, r.relaxed_loss, r.rounded_loss, r.penalty, r.recovered
        )?;
    }
    Ok(())
}
