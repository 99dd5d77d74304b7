//! Graph matching and quadratic assignment objectives.
//!
//! Graph matching minimizes `‖AQ − QB‖²_F` over permutation matrices `Q`.
//! For permutations this equals `tr(AᵀA) + tr(BᵀB) − 2·tr(A Q Bᵀ Qᵀ)`, so GM
//! is the general QAP `min tr(A' Q Bᵀ Qᵀ)` with `A' = −A`. Relaxing `Q` to the
//! doubly stochastic set gives the convex-relaxed GM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Permutation, RelaxedPermutation, SquareMatrix};
use crate::optimizer::{
    run_restarts, Gradient, ObjectiveProblem, OptimizerConfig, Schedule, StepProjection,
};
use crate::penalty::penalty_value;

/// Largest dimension accepted by [`brute_force_oracle`].
pub const ORACLE_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QapKind {
    /// `‖AQ − QB‖²_F`.
    GraphMatching,
    /// `tr(A Q Bᵀ Qᵀ)`.
    GeneralQap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QapInstance {
    pub a: SquareMatrix,
    pub b: SquareMatrix,
    pub kind: QapKind,
}

impl QapInstance {
    pub fn new(a: SquareMatrix, b: SquareMatrix, kind: QapKind) -> Result<Self> {
        a.ensure_same_dim(&b)?;
        Ok(Self { a, b, kind })
    }

    pub fn graph_matching(a: SquareMatrix, b: SquareMatrix) -> Result<Self> {
        Self::new(a, b, QapKind::GraphMatching)
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    /// The first 2×2 instance, where the convex relaxation misses the identity.
    pub fn example1() -> Self {
        Self::graph_matching(
            SquareMatrix::from_rows(&[[1.0, 2.0], [3.0, 1.0]]).unwrap(),
            SquareMatrix::from_rows(&[[0.0, 2.0], [3.0, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    /// The second 2×2 instance: a looped edge against a plain edge.
    pub fn example2() -> Self {
        Self::graph_matching(
            SquareMatrix::from_rows(&[[2.0, 1.0], [1.0, 0.0]]).unwrap(),
            SquareMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(),
        )
        .unwrap()
    }

    /// Uniform `[0, 1]` weights. Graph matching instances are weighted
    /// undirected graphs (symmetric, loops allowed); general instances have
    /// independent entries.
    pub fn random_uniform(n: usize, seed: u64, kind: QapKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |symmetric: bool| {
            let mut m = SquareMatrix::from_fn(n, |_, _| rng.random::<f64>());
            if symmetric {
                for i in 0..n {
                    for j in 0..i {
                        m[(i, j)] = m[(j, i)];
                    }
                }
            }
            m
        };
        let symmetric = kind == QapKind::GraphMatching;
        let a = draw(symmetric);
        let b = draw(symmetric);
        Self { a, b, kind }
    }

    pub fn objective(&self, q: &SquareMatrix) -> Result<f64> {
        match self.kind {
            QapKind::GraphMatching => gm_objective(self, q),
            QapKind::GeneralQap => qap_trace_objective(self, q),
        }
    }

    pub fn gradient(&self, q: &SquareMatrix) -> Result<SquareMatrix> {
        match self.kind {
            QapKind::GraphMatching => gm_gradient(self, q),
            QapKind::GeneralQap => qap_trace_gradient(self, q),
        }
    }

    /// Objective at a permutation, evaluated in index form in O(n²).
    pub fn permutation_objective(&self, p: &Permutation) -> Result<f64> {
        if p.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: p.n(),
            });
        }
        let map = p.as_slice();
        let n = self.n();
        let mut total = 0.0;
        for i in 0..n {
            for l in 0..n {
                let a = self.a[(i, l)];
                let b = self.b[(map[i], map[l])];
                total += match self.kind {
                    QapKind::GraphMatching => (a - b) * (a - b),
                    QapKind::GeneralQap => a * b,
                };
            }
        }
        Ok(total)
    }
}

fn residual(inst: &QapInstance, q: &SquareMatrix) -> Result<SquareMatrix> {
    inst.a.ensure_same_dim(q)?;
    inst.a.matmul(q)?.sub(&q.matmul(&inst.b)?)
}

/// `‖AQ − QB‖²_F`.
pub fn gm_objective(inst: &QapInstance, q: &SquareMatrix) -> Result<f64> {
    let r = residual(inst, q)?;
    Ok(r.as_slice().iter().map(|x| x * x).sum())
}

/// `2 (Aᵀ R − R Bᵀ)` with `R = AQ − QB`.
pub fn gm_gradient(inst: &QapInstance, q: &SquareMatrix) -> Result<SquareMatrix> {
    let r = residual(inst, q)?;
    let left = inst.a.transpose().matmul(&r)?;
    let right = r.matmul(&inst.b.transpose())?;
    Ok(left.sub(&right)?.scale(2.0))
}

/// `tr(A Q Bᵀ Qᵀ)`.
pub fn qap_trace_objective(inst: &QapInstance, q: &SquareMatrix) -> Result<f64> {
    inst.a.ensure_same_dim(q)?;
    let aq = inst.a.matmul(q)?;
    let qb = q.matmul(&inst.b)?;
    // tr(X Yᵀ) = <X, Y>
    aq.dot(&qb)
}

/// `Aᵀ Q B + A Q Bᵀ`.
pub fn qap_trace_gradient(inst: &QapInstance, q: &SquareMatrix) -> Result<SquareMatrix> {
    inst.a.ensure_same_dim(q)?;
    let first = inst.a.transpose().matmul(q)?.matmul(&inst.b)?;
    let second = inst.a.matmul(q)?.matmul(&inst.b.transpose())?;
    first.add(&second)
}

/// [`QapInstance`] as a single-matrix optimizer objective.
pub struct QapProblem<'a> {
    pub instance: &'a QapInstance,
}

impl ObjectiveProblem for QapProblem<'_> {
    fn dimensions(&self) -> Vec<usize> {
        vec![self.instance.n()]
    }

    fn loss(&self, _weights: &[f64], matrices: &[SquareMatrix]) -> f64 {
        self.instance
            .objective(&matrices[0])
            .expect("optimizer keeps dimensions")
    }

    fn loss_gradient(&self, _weights: &[f64], matrices: &[SquareMatrix]) -> Gradient {
        Gradient {
            weights: Vec::new(),
            matrices: vec![self
                .instance
                .gradient(&matrices[0])
                .expect("optimizer keeps dimensions")],
        }
    }
}

/// `0.03 · ‖A‖₂ · ‖B‖₂`.
pub fn default_lambda(inst: &QapInstance) -> f64 {
    0.03 * inst.a.spectral_norm() * inst.b.spectral_norm()
}

/// Step size from the curvature scale `2 (‖A‖₂ + ‖B‖₂)²`, linear decay.
pub fn default_config(inst: &QapInstance) -> OptimizerConfig {
    let scale = inst.a.spectral_norm() + inst.b.spectral_norm();
    let curvature = (2.0 * scale * scale).max(1e-12);
    OptimizerConfig {
        lambda: default_lambda(inst),
        learning_rate: 0.5 / curvature,
        schedule: Schedule::LinearDecay,
        total_iterations: 3000,
        record_every: 100,
        ..OptimizerConfig::default()
    }
}

pub const DEFAULT_RESTARTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexSolution {
    pub relaxed: RelaxedPermutation,
    pub objective: f64,
    pub seed: u64,
}

/// Convex-relaxed GM: the optimizer with `λ = 0` and exact Euclidean
/// projection, best of `restarts` seeds.
pub fn solve_convex_relaxed(
    inst: &QapInstance,
    cfg: &OptimizerConfig,
    restarts: usize,
) -> Result<ConvexSolution> {
    if inst.kind != QapKind::GraphMatching {
        return Err(Error::InvalidConfig(
            "convex relaxation is defined for graph matching instances".into(),
        ));
    }
    let cfg = OptimizerConfig {
        lambda: 0.0,
        projection: StepProjection::Euclidean,
        ..cfg.clone()
    };
    let problem = QapProblem { instance: inst };
    let mut best: Option<ConvexSolution> = None;
    let mut first_err = None;
    for outcome in run_restarts(&problem, &cfg, restarts.max(1)) {
        match outcome {
            Ok(res) => {
                if best.as_ref().is_none_or(|b| res.final_loss < b.objective) {
                    best = Some(ConvexSolution {
                        objective: res.final_loss,
                        seed: res.seed,
                        relaxed: res.relaxed_matrices.into_iter().next().unwrap(),
                    });
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one run").into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedSolution {
    pub permutation: Permutation,
    /// Objective at the rounded permutation.
    pub objective: f64,
    pub relaxed: RelaxedPermutation,
    pub relaxed_objective: f64,
    pub penalty: f64,
    pub seed: u64,
}

/// Minimizes `objective(Q) + λ P(Q)` from `restarts` seeds, rounds each run
/// and keeps the permutation with the lowest objective (ties to the earliest
/// seed).
pub fn solve_penalized(
    inst: &QapInstance,
    lambda: f64,
    cfg: &OptimizerConfig,
    restarts: usize,
) -> Result<PenalizedSolution> {
    let cfg = OptimizerConfig {
        lambda,
        ..cfg.clone()
    };
    let problem = QapProblem { instance: inst };
    let mut best: Option<PenalizedSolution> = None;
    let mut first_err = None;
    for outcome in run_restarts(&problem, &cfg, restarts.max(1)) {
        match outcome {
            Ok(res) => {
                let permutation = res.rounded[0].clone();
                let objective = inst.permutation_objective(&permutation)?;
                if best.as_ref().is_none_or(|b| objective < b.objective) {
                    let relaxed = res.relaxed_matrices.into_iter().next().unwrap();
                    best = Some(PenalizedSolution {
                        penalty: penalty_value(relaxed.matrix()),
                        permutation,
                        objective,
                        relaxed,
                        relaxed_objective: res.final_loss,
                        seed: res.seed,
                    });
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one run").into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub solution: Option<PenalizedSolution>,
    pub error: Option<String>,
}

/// [`solve_penalized`] over a list of penalty weights; failures are recorded
/// per point.
pub fn sweep_lambda(
    inst: &QapInstance,
    lambdas: &[f64],
    cfg: &OptimizerConfig,
    restarts: usize,
) -> Vec<SweepPoint> {
    lambdas
        .iter()
        .map(
            |&lambda| match solve_penalized(inst, lambda, cfg, restarts) {
                Ok(s) => SweepPoint {
                    lambda,
                    solution: Some(s),
                    error: None,
                },
                Err(e) => SweepPoint {
                    lambda,
                    solution: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect()
}

/// Exhaustive minimization over all permutations for `n ≤ 10`. Among equal
/// objectives (within `1e-12` relative) the lexicographically smallest map
/// wins.
pub fn brute_force_oracle(inst: &QapInstance) -> Result<(Permutation, f64)> {
    let n = inst.n();
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: ORACLE_MAX_N,
        });
    }
    let mut search = Search {
        inst,
        map: Vec::with_capacity(n),
        used: vec![false; n],
        best_value: f64::INFINITY,
        best_map: Vec::new(),
    };
    search.descend(0.0);
    let value = search.best_value;
    Ok((Permutation::new(search.best_map)?, value))
}

struct Search<'a> {
    inst: &'a QapInstance,
    map: Vec<usize>,
    used: Vec<bool>,
    best_value: f64,
    best_map: Vec<usize>,
}

impl Search<'_> {
    fn term(&self, i: usize, l: usize) -> f64 {
        let a = self.inst.a[(i, l)];
        let b = self.inst.b[(self.map[i], self.map[l])];
        match self.inst.kind {
            QapKind::GraphMatching => (a - b) * (a - b),
            QapKind::GeneralQap => a * b,
        }
    }

    fn improves(&self, value: f64) -> bool {
        !self.best_value.is_finite()
            || value < self.best_value - 1e-12 * (1.0 + self.best_value.abs())
    }

    fn descend(&mut self, partial: f64) {
        let n = self.inst.n();
        let k = self.map.len();
        if k == n {
            if self.improves(partial) {
                self.best_value = partial;
                self.best_map = self.map.clone();
            }
            return;
        }
        // GM terms are nonnegative, so a partial sum is a lower bound.
        if self.inst.kind == QapKind::GraphMatching && !self.improves(partial) {
            return;
        }
        for j in 0..n {
            if self.used[j] {
                continue;
            }
            self.used[j] = true;
            self.map.push(j);
            let mut added = self.term(k, k);
            for i in 0..k {
                added += self.term(i, k) + self.term(k, i);
            }
            self.descend(partial + added);
            self.map.pop();
            self.used[j] = false;
        }
    }
}
