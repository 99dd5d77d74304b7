//! Projected-gradient driver for objectives over relaxed permutations.
//!
//! Each iteration takes a gradient step on `L(w) + λ Σ_j P(M_j)`, thresholds
//! every `M_j` to be nonnegative and applies RAS sweeps (columns, then rows).
//! At the end every `M_j` is rounded to its nearest permutation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::matrix::{Permutation, RelaxedPermutation, SquareMatrix};
use crate::penalty::{penalty_subgradient, penalty_value, PenaltyConfig, DEFAULT_NORM_GUARD};
use crate::projection::{
    constraint_violation, project_birkhoff_euclidean, ras_pass_in_place, threshold_nonnegative,
    ProjectionConfig,
};
use crate::rounding::{nearest_permutation_lap, round_argmax};
use crate::trace::TraceRecord;

/// Gradient of the loss with respect to the auxiliary weights and to every
/// relaxed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub matrices: Vec<SquareMatrix>,
}

/// A differentiable loss `L(w, M_1, …, M_J)`.
pub trait ObjectiveProblem: Sync {
    /// Sizes of the relaxed matrices `M_j`.
    fn dimensions(&self) -> Vec<usize>;

    fn weight_dimension(&self) -> usize {
        0
    }

    fn loss(&self, weights: &[f64], matrices: &[SquareMatrix]) -> f64;

    fn loss_gradient(&self, weights: &[f64], matrices: &[SquareMatrix]) -> Gradient;

    /// Gradient used at optimizer iteration `iteration`. Stochastic problems
    /// override this to sample a mini-batch; the default is the full gradient.
    fn iteration_gradient(
        &self,
        _iteration: usize,
        weights: &[f64],
        matrices: &[SquareMatrix],
    ) -> Gradient {
        self.loss_gradient(weights, matrices)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    Constant,
    /// `η_t = η_0 (1 − t/T)`.
    LinearDecay,
}

/// How each iterate is pulled back toward the doubly stochastic set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepProjection {
    /// Threshold, then `ras_passes_per_step` column/row normalizations.
    Ras,
    /// Exact Euclidean projection (Dykstra). Turns the driver into plain
    /// projected gradient descent, whose fixed points are the KKT points of
    /// the constrained problem; RAS scaling is multiplicative and its fixed
    /// points are not.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub total_iterations: usize,
    pub seed: u64,
    pub ras_passes_per_step: usize,
    pub projection: StepProjection,
    /// Trace sampling stride; the first and last iterations are always kept.
    pub record_every: usize,
    /// Heavy-ball coefficient, 0 for plain gradient descent.
    pub momentum: f64,
    pub norm_guard: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            learning_rate: 0.2,
            schedule: Schedule::LinearDecay,
            total_iterations: 1000,
            seed: 0,
            ras_passes_per_step: 1,
            projection: StepProjection::Ras,
            record_every: 10,
            momentum: 0.0,
            norm_guard: DEFAULT_NORM_GUARD,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        PenaltyConfig::new(self.lambda, self.norm_guard)?;
        if self.total_iterations == 0 {
            return Err(Error::InvalidConfig("total_iterations must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if self.ras_passes_per_step == 0 {
            return Err(Error::InvalidConfig(
                "ras_passes_per_step must be >= 1".into(),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::LinearDecay => {
                let frac = iteration as f64 / self.total_iterations as f64;
                self.learning_rate * (1.0 - frac).max(0.0)
            }
        }
    }

    fn penalty(&self) -> PenaltyConfig {
        PenaltyConfig {
            lambda: self.lambda,
            norm_guard: self.norm_guard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub iteration: usize,
    pub weights: Vec<f64>,
    pub matrices: Vec<SquareMatrix>,
    weight_velocity: Vec<f64>,
    matrix_velocity: Vec<SquareMatrix>,
}

impl OptimizerState {
    /// Starts from explicit values instead of a random draw.
    pub fn from_parts(weights: Vec<f64>, matrices: Vec<SquareMatrix>) -> Self {
        let weight_velocity = vec![0.0; weights.len()];
        let matrix_velocity = matrices
            .iter()
            .map(|m| SquareMatrix::zeros(m.n()))
            .collect();
        Self {
            iteration: 0,
            weights,
            matrices,
            weight_velocity,
            matrix_velocity,
        }
    }
}

/// What a single [`step`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub learning_rate: f64,
    /// Largest Frobenius norm of a full matrix gradient `∇L + λ∇P`.
    pub max_gradient_norm: f64,
}

/// Weights from `N(0, 1)`; each `M_j` entrywise from `|N(0, 1)|` followed by
/// one RAS sweep.
pub fn initialize(problem: &dyn ObjectiveProblem, cfg: &OptimizerConfig) -> Result<OptimizerState> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights: Vec<f64> = (0..problem.weight_dimension())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut matrices = Vec::new();
    for n in problem.dimensions() {
        let mut m = SquareMatrix::from_fn(n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.abs()
        });
        ras_pass_in_place(&mut m)?;
        matrices.push(m);
    }
    Ok(OptimizerState::from_parts(weights, matrices))
}

/// One iteration: gradient step on weights and matrices, threshold, RAS.
pub fn step(
    problem: &dyn ObjectiveProblem,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<StepReport> {
    let eta = cfg.learning_rate_at(state.iteration);
    let grad = problem.iteration_gradient(state.iteration, &state.weights, &state.matrices);
    if grad.weights.len() != state.weights.len() || grad.matrices.len() != state.matrices.len() {
        return Err(Error::DimensionMismatch {
            expected: state.matrices.len(),
            found: grad.matrices.len(),
        });
    }

    for ((w, v), g) in state
        .weights
        .iter_mut()
        .zip(state.weight_velocity.iter_mut())
        .zip(&grad.weights)
    {
        *v = cfg.momentum * *v + g;
        *w -= eta * *v;
    }

    let penalty = cfg.penalty();
    let mut max_gradient_norm: f64 = 0.0;
    for ((m, v), g_loss) in state
        .matrices
        .iter_mut()
        .zip(state.matrix_velocity.iter_mut())
        .zip(grad.matrices)
    {
        let g = if cfg.lambda > 0.0 {
            g_loss.add(&penalty_subgradient(m, &penalty).scale(cfg.lambda))?
        } else {
            g_loss
        };
        max_gradient_norm = max_gradient_norm.max(g.frobenius_norm());
        for ((vk, gk), mk) in v
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice().iter_mut())
        {
            *vk = cfg.momentum * *vk + gk;
            *mk -= eta * *vk;
        }
        match cfg.projection {
            StepProjection::Ras => {
                *m = threshold_nonnegative(m);
                for _ in 0..cfg.ras_passes_per_step {
                    ras_pass_in_place(m)?;
                }
            }
            StepProjection::Euclidean => {
                let dykstra = ProjectionConfig {
                    epsilon: 1e-13,
                    max_iters: 100_000,
                    ..ProjectionConfig::default()
                };
                *m = match project_birkhoff_euclidean(m, &dykstra) {
                    Ok(p) => p,
                    Err(Error::NoConvergence { best, .. }) => *best,
                    Err(e) => return Err(e),
                };
            }
        }
        m.check_finite()?;
    }
    state.iteration += 1;
    Ok(StepReport {
        learning_rate: eta,
        max_gradient_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub seed: u64,
    pub final_weights: Vec<f64>,
    pub relaxed_matrices: Vec<RelaxedPermutation>,
    /// `rounded[j]` is the nearest permutation of `relaxed_matrices[j]`.
    pub rounded: Vec<Permutation>,
    pub trace: Vec<TraceRecord>,
    pub final_loss: f64,
    pub rounded_loss: f64,
    pub final_penalty: f64,
    /// `loss(w, rounded) − loss(w, relaxed)`.
    pub rounding_gap: f64,
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, Error)]
#[error("optimization failed at iteration {iteration}: {source}")]
pub struct RunFailure {
    pub iteration: usize,
    pub seed: u64,
    #[source]
    pub source: Error,
    pub trace: Vec<TraceRecord>,
}

/// Snapshot of the objective, penalty, feasibility and rounding gap.
pub fn record(
    problem: &dyn ObjectiveProblem,
    state: &OptimizerState,
) -> (TraceRecord, Vec<Permutation>, f64) {
    let loss = problem.loss(&state.weights, &state.matrices);
    let penalty: f64 = state.matrices.iter().map(penalty_value).sum();
    let violation = state
        .matrices
        .iter()
        .map(constraint_violation)
        .fold(0.0, f64::max);
    let rounded: Vec<Permutation> = state.matrices.iter().map(nearest_permutation_lap).collect();
    let rounded_mats: Vec<SquareMatrix> = rounded.iter().map(Permutation::to_matrix).collect();
    let rounded_loss = problem.loss(&state.weights, &rounded_mats);
    let argmax: Option<Vec<SquareMatrix>> = state
        .matrices
        .iter()
        .map(|m| round_argmax(m).ok().map(|p| p.to_matrix()))
        .collect();
    let argmax_rounding_gap = argmax.map(|mats| problem.loss(&state.weights, &mats) - loss);
    (
        TraceRecord {
            iteration: state.iteration,
            loss,
            penalty,
            constraint_violation: violation,
            rounding_gap: rounded_loss - loss,
            argmax_rounding_gap,
        },
        rounded,
        rounded_loss,
    )
}

/// Runs `cfg.total_iterations` steps from a seeded initialization.
pub fn run(
    problem: &dyn ObjectiveProblem,
    cfg: &OptimizerConfig,
) -> std::result::Result<OptimizationResult, RunFailure> {
    let fail = |iteration, source, trace| RunFailure {
        iteration,
        seed: cfg.seed,
        source,
        trace,
    };
    cfg.validate().map_err(|e| fail(0, e, Vec::new()))?;
    let state = initialize(problem, cfg).map_err(|e| fail(0, e, Vec::new()))?;
    run_from(problem, cfg, state)
}

/// Runs from an explicit starting state.
pub fn run_from(
    problem: &dyn ObjectiveProblem,
    cfg: &OptimizerConfig,
    mut state: OptimizerState,
) -> std::result::Result<OptimizationResult, RunFailure> {
    cfg.validate().map_err(|e| RunFailure {
        iteration: 0,
        seed: cfg.seed,
        source: e,
        trace: Vec::new(),
    })?;
    let mut trace = vec![record(problem, &state).0];
    for t in 0..cfg.total_iterations {
        if let Err(source) = step(problem, &mut state, cfg) {
            return Err(RunFailure {
                iteration: t,
                seed: cfg.seed,
                source,
                trace,
            });
        }
        let done = t + 1 == cfg.total_iterations;
        if done || (t + 1) % cfg.record_every == 0 {
            trace.push(record(problem, &state).0);
        }
    }
    let (last, rounded, rounded_loss) = record(problem, &state);
    let relaxed_matrices = state
        .matrices
        .into_iter()
        .map(|m| RelaxedPermutation::new(m).expect("thresholded iterate is nonnegative"))
        .collect();
    Ok(OptimizationResult {
        seed: cfg.seed,
        final_weights: state.weights,
        relaxed_matrices,
        rounded,
        trace,
        final_loss: last.loss,
        rounded_loss,
        final_penalty: last.penalty,
        rounding_gap: last.rounding_gap,
    })
}

/// Independent runs with seeds `cfg.seed, cfg.seed + 1, …`, executed in
/// parallel. Results are in seed order.
pub fn run_restarts(
    problem: &dyn ObjectiveProblem,
    cfg: &OptimizerConfig,
    restarts: usize,
) -> Vec<std::result::Result<OptimizationResult, RunFailure>> {
    (0..restarts as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = OptimizerConfig {
                seed: cfg.seed.wrapping_add(k),
                ..cfg.clone()
            };
            run(problem, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// L = 0 with one matrix of size n.
    struct Null(usize);

    impl ObjectiveProblem for Null {
        fn dimensions(&self) -> Vec<usize> {
            vec![self.0]
        }
        fn loss(&self, _: &[f64], _: &[SquareMatrix]) -> f64 {
            0.0
        }
        fn loss_gradient(&self, _: &[f64], m: &[SquareMatrix]) -> Gradient {
            Gradient {
                weights: vec![],
                matrices: vec![SquareMatrix::zeros(m[0].n())],
            }
        }
    }

    /// L(w, M) = ½‖w − 1‖² + ⟨C, M⟩.
    struct Linear {
        c: SquareMatrix,
    }

    impl ObjectiveProblem for Linear {
        fn dimensions(&self) -> Vec<usize> {
            vec![self.c.n()]
        }
        fn weight_dimension(&self) -> usize {
            3
        }
        fn loss(&self, w: &[f64], m: &[SquareMatrix]) -> f64 {
            0.5 * w.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>() + self.c.dot(&m[0]).unwrap()
        }
        fn loss_gradient(&self, w: &[f64], _: &[SquareMatrix]) -> Gradient {
            Gradient {
                weights: w.iter().map(|x| x - 1.0).collect(),
                matrices: vec![self.c.clone()],
            }
        }
    }

    #[test]
    fn null_problem_keeps_doubly_stochastic_point() {
        let cfg = OptimizerConfig {
            lambda: 0.0,
            ..OptimizerConfig::default()
        };
        let start = SquareMatrix::filled(4, 0.25);
        let mut state = OptimizerState::from_parts(vec![], vec![start.clone()]);
        step(&Null(4), &mut state, &cfg).unwrap();
        assert_eq!(state.matrices[0], start);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn initialization_is_seeded_and_nonnegative() {
        let cfg = OptimizerConfig::default();
        let a = initialize(
            &Linear {
                c: SquareMatrix::identity(5),
            },
            &cfg,
        )
        .unwrap();
        let b = initialize(
            &Linear {
                c: SquareMatrix::identity(5),
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights.len(), 3);
        assert!(a.matrices[0].min_entry() >= 0.0);
        let other = initialize(
            &Linear {
                c: SquareMatrix::identity(5),
            },
            &OptimizerConfig { seed: 1, ..cfg },
        )
        .unwrap();
        assert_ne!(a.matrices, other.matrices);
    }

    #[test]
    fn initial_violation_is_moderate() {
        for seed in 0..100 {
            for n in [4usize, 8, 16] {
                let cfg = OptimizerConfig {
                    seed,
                    ..OptimizerConfig::default()
                };
                let state = initialize(&Null(n), &cfg).unwrap();
                let v = constraint_violation(&state.matrices[0]);
                assert!(v <= 0.5 + 1e-12, "seed {seed} n {n}: violation {v}");
            }
        }
    }

    #[test]
    fn linear_problem_moves_mass_to_cheapest_permutation() {
        // Cost is lowest on the anti-diagonal.
        let c = SquareMatrix::from_fn(3, |i, j| if i + j == 2 { 0.0 } else { 1.0 });
        let cfg = OptimizerConfig {
            lambda: 0.05,
            learning_rate: 0.1,
            total_iterations: 400,
            ..OptimizerConfig::default()
        };
        let result = run(&Linear { c }, &cfg).unwrap();
        assert_eq!(result.rounded[0].as_slice(), &[2, 1, 0]);
        assert!(result.final_weights.iter().all(|w| (w - 1.0).abs() < 0.2));
        assert!(result.final_penalty < 1e-6);
        assert!(result.rounding_gap.abs() < 1e-6);
    }

    #[test]
    fn run_is_deterministic_and_records_trace() {
        let c = SquareMatrix::from_fn(4, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let cfg = OptimizerConfig {
            total_iterations: 55,
            record_every: 10,
            ..OptimizerConfig::default()
        };
        let a = run(&Linear { c: c.clone() }, &cfg).unwrap();
        let b = run(&Linear { c }, &cfg).unwrap();
        assert_eq!(a, b);
        let iters: Vec<usize> = a.trace.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, vec![0, 10, 20, 30, 40, 50, 55]);
        assert!(a
            .trace
            .iter()
            .all(|r| r.penalty >= 0.0 && r.penalty.is_finite()));
    }

    #[test]
    fn zero_sum_is_a_run_failure_with_trace() {
        // A huge constant step wipes a column after thresholding.
        let c = SquareMatrix::from_fn(3, |_, j| if j == 0 { 1e6 } else { 0.0 });
        let cfg = OptimizerConfig {
            lambda: 0.0,
            learning_rate: 1.0,
            schedule: Schedule::Constant,
            total_iterations: 5,
            ..OptimizerConfig::default()
        };
        let err = run(&Linear { c }, &cfg).unwrap_err();
        assert!(matches!(err.source, Error::ZeroSum { .. }));
        assert_eq!(err.trace.len(), 1);
        assert_eq!(err.iteration, 0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = OptimizerConfig {
            total_iterations: 0,
            ..OptimizerConfig::default()
        };
        assert!(run(&Null(2), &bad).is_err());
        let bad = OptimizerConfig {
            lambda: -1.0,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn linear_decay_schedule() {
        let cfg = OptimizerConfig {
            learning_rate: 0.2,
            total_iterations: 4,
            ..OptimizerConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 0.2);
        assert!((cfg.learning_rate_at(2) - 0.1).abs() < 1e-15);
        assert!(cfg.learning_rate_at(3) > 0.0);
    }
}
