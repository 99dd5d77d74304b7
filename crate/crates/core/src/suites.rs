//! Randomized property suites behind `permrelax verify`.
//!
//! Every suite is deterministic for a given seed and reports one line per
//! property.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Error;
use crate::gradcheck::{matrix_central_difference, max_relative_error};
use crate::matrix::{permutation_to_matrix, Permutation, SquareMatrix};
use crate::penalty::{penalty_subgradient, penalty_value, PenaltyConfig};
use crate::projection::{constraint_violation, iterate_to_tolerance, ras_pass, ProjectionConfig};
use crate::qap::{
    gm_gradient, gm_objective, qap_trace_gradient, qap_trace_objective, QapInstance, QapKind,
};
use crate::rounding::{nearest_permutation_lap, round_argmax};
use crate::shuffle::{generate_task, shuffle_objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Suite {
    Theorem1,
    Theorem2,
    Gradients,
    Sinkhorn,
    Rounding,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Theorem1,
        Suite::Theorem2,
        Suite::Gradients,
        Suite::Sinkhorn,
        Suite::Rounding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Gradients => "gradients",
            Suite::Sinkhorn => "sinkhorn",
            Suite::Rounding => "rounding",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}/{}: {}", self.suite, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Seed used by the CLI and the acceptance tests.
pub const DEFAULT_SEED: u64 = 20_190_101;

pub fn run_suite(suite: Suite, seed: u64) -> SuiteReport {
    let checks = match suite {
        Suite::Theorem1 => theorem1(seed),
        Suite::Theorem2 => theorem2(seed),
        Suite::Gradients => gradients(seed),
        Suite::Sinkhorn => sinkhorn(seed),
        Suite::Rounding => rounding(seed),
    };
    SuiteReport { suite, checks }
}

fn random_permutation(n: usize, rng: &mut ChaCha8Rng) -> Permutation {
    let mut map: Vec<usize> = (0..n).collect();
    map.shuffle(rng);
    Permutation::new(map).expect("shuffled identity")
}

fn uniform_matrix(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> SquareMatrix {
    SquareMatrix::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Zero penalty on permutations, positive penalty on strict convex
/// combinations of two distinct permutations.
fn theorem1(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_perm: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=64);
        let p = random_permutation(n, &mut rng);
        worst_perm = worst_perm.max(penalty_value(&permutation_to_matrix(&p)).abs());
    }
    let mut least_mix = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(2..=64);
        let p = random_permutation(n, &mut rng);
        let mut q = random_permutation(n, &mut rng);
        while q == p {
            q = random_permutation(n, &mut rng);
        }
        let alpha = rng.random_range(0.01..0.99);
        let m = permutation_to_matrix(&p)
            .scale(alpha)
            .add(&permutation_to_matrix(&q).scale(1.0 - alpha))
            .expect("same dimension");
        least_mix = least_mix.min(penalty_value(&m));
    }
    let mut most_negative: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=32);
        let m = uniform_matrix(n, 0.0, 2.0, &mut rng);
        most_negative = most_negative.min(penalty_value(&m));
    }
    vec![
        Check::new(
            "permutations_have_zero_penalty",
            worst_perm <= 1e-12,
            format!("max |P| over 200 permutations (n in 2..=64) = {worst_perm:e}"),
        ),
        Check::new(
            "convex_combinations_are_penalized",
            least_mix > 1e-6,
            format!("min P over 200 strict two-permutation mixtures = {least_mix:.6e}"),
        ),
        Check::new(
            "penalty_is_nonnegative",
            most_negative >= 0.0,
            format!("min P over 200 random nonnegative matrices = {most_negative:e}"),
        ),
    ]
}

/// `M = P* + εE` with `E` uniform on `[0, 1]`. Each row/column term is at
/// most `ε(n − 1)`, so `P(M) ≤ 2n(n − 1)ε`; the LAP rounding must return `P*`.
fn theorem2(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut recovered = 0;
    let mut total = 0;
    let mut within_bound = true;
    let mut details = Vec::new();
    let mut dist_ratio: f64 = 0.0;
    for &n in &[4usize, 8, 16] {
        let bound = 2.0 * (n * (n - 1)) as f64;
        for &eps in &[1e-3, 1e-2, 1e-1] {
            let mut c_emp: f64 = 0.0;
            for _ in 0..100 {
                let p = random_permutation(n, &mut rng);
                let pm = permutation_to_matrix(&p);
                let noise = uniform_matrix(n, 0.0, 1.0, &mut rng);
                let m = pm.add(&noise.scale(eps)).expect("same dimension");
                let pen = penalty_value(&m);
                c_emp = c_emp.max(pen / eps);
                within_bound &= pen <= bound * eps;
                let rounded = nearest_permutation_lap(&m);
                total += 1;
                if rounded == p {
                    recovered += 1;
                }
                let slack = pen + constraint_violation(&m);
                let dist = crate::matrix::frobenius_distance(&m, &permutation_to_matrix(&rounded))
                    .expect("same dimension");
                dist_ratio = dist_ratio.max(dist / slack);
            }
            details.push(format!("n={n} eps={eps:e}: C={c_emp:.3} (bound {bound})"));
        }
    }
    checks.push(Check::new(
        "penalty_linear_in_perturbation",
        within_bound,
        details.join("; "),
    ));
    checks.push(Check::new(
        "lap_recovers_hidden_permutation",
        recovered == total,
        format!(
            "{recovered}/{total} recovered; max ||M - round(M)||_F / (P + violation) = {dist_ratio:.4}"
        ),
    ));
    checks
}

/// Central differences at 100 random points per gradient.
fn gradients(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const TOL: f64 = 1e-5;

    let cfg = PenaltyConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        // Entries bounded away from 0 keep every sign fixed within the probe.
        let m = uniform_matrix(n, 0.05, 1.0, &mut rng);
        let numeric = matrix_central_difference(penalty_value, &m, 1e-6);
        let analytic = penalty_subgradient(&m, &cfg);
        worst = worst.max(max_relative_error(analytic.as_slice(), numeric.as_slice()));
    }
    let mut checks = vec![Check::new(
        "penalty_subgradient",
        worst <= TOL,
        format!("max relative error {worst:.3e} over 100 points"),
    )];

    let mut worst_gm: f64 = 0.0;
    let mut worst_qap: f64 = 0.0;
    for k in 0..100u64 {
        let n = rng.random_range(2..=6);
        let gm = QapInstance::random_uniform(n, seed ^ (k + 1), QapKind::GraphMatching);
        let qap = QapInstance {
            kind: QapKind::GeneralQap,
            ..gm.clone()
        };
        let q = uniform_matrix(n, 0.0, 1.0, &mut rng);
        let numeric = matrix_central_difference(|x| gm_objective(&gm, x).expect("dims"), &q, 1e-5);
        let analytic = gm_gradient(&gm, &q).expect("dims");
        worst_gm = worst_gm.max(max_relative_error(analytic.as_slice(), numeric.as_slice()));
        let numeric =
            matrix_central_difference(|x| qap_trace_objective(&qap, x).expect("dims"), &q, 1e-5);
        let analytic = qap_trace_gradient(&qap, &q).expect("dims");
        worst_qap = worst_qap.max(max_relative_error(analytic.as_slice(), numeric.as_slice()));
    }
    checks.push(Check::new(
        "gm_gradient",
        worst_gm <= TOL,
        format!("max relative error {worst_gm:.3e} over 100 points"),
    ));
    checks.push(Check::new(
        "qap_trace_gradient",
        worst_qap <= TOL,
        format!("max relative error {worst_qap:.3e} over 100 points"),
    ));

    let mut worst_shuffle: f64 = 0.0;
    for k in 0..100u64 {
        let n = rng.random_range(2..=6);
        let (task, data) = generate_task(n, 10 * n, 0.1, seed ^ (k + 1)).expect("valid task");
        let obj = shuffle_objective(&task, &data).expect("consistent dataset");
        let m = uniform_matrix(n, 0.0, 1.0, &mut rng);
        let numeric = matrix_central_difference(|x| obj.loss_at(x).expect("dims"), &m, 1e-5);
        let analytic = obj.gradient_at(&m).expect("dims");
        worst_shuffle =
            worst_shuffle.max(max_relative_error(analytic.as_slice(), numeric.as_slice()));
    }
    checks.push(Check::new(
        "shuffle_gradient",
        worst_shuffle <= TOL,
        format!("max relative error {worst_shuffle:.3e} over 100 points"),
    ));
    checks
}

fn lognormal_matrix(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
    SquareMatrix::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z.exp()
    })
}

fn sinkhorn(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ProjectionConfig {
        epsilon: 1e-8,
        ..ProjectionConfig::default()
    };
    let mut converged = 0;
    let mut max_iters = 0;
    let mut worst_row: f64 = 0.0;
    let mut monotone = true;
    let mut worst_invariance: f64 = 0.0;
    for k in 0..200 {
        let n = rng.random_range(2..=60);
        let m = lognormal_matrix(n, &mut rng);

        let once = ras_pass(&m).expect("positive input");
        for s in once.row_sums() {
            worst_row = worst_row.max((s - 1.0).abs());
        }

        // Column sums contract towards 1 from both sides after the first pass.
        let mut cur = once;
        let mut hi = f64::INFINITY;
        let mut lo = f64::NEG_INFINITY;
        for _ in 0..5 {
            let cols = cur.col_sums();
            let new_hi = cols.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let new_lo = cols.iter().copied().fold(f64::INFINITY, f64::min);
            monotone &= new_hi <= hi + 1e-12 && new_lo >= lo - 1e-12;
            hi = new_hi;
            lo = new_lo;
            cur = ras_pass(&cur).expect("positive input");
        }

        if let Ok((limit, iters)) = iterate_to_tolerance(&m, &cfg) {
            {
                converged += 1;
                max_iters = max_iters.max(iters);
                if k % 10 == 0 {
                    // The scaling limit ignores positive diagonal rescaling.
                    let d1: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
                    let d2: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
                    let scaled = SquareMatrix::from_fn(n, |i, j| d1[i] * m[(i, j)] * d2[j]);
                    if let Ok((other, _)) = iterate_to_tolerance(&scaled, &cfg) {
                        let diff = other.sub(&limit).expect("same dimension").max_abs();
                        worst_invariance = worst_invariance.max(diff);
                    } else {
                        worst_invariance = f64::INFINITY;
                    }
                }
            }
        }
    }
    let ds = (0..4)
        .map(|k| {
            permutation_to_matrix(&random_permutation(
                6,
                &mut ChaCha8Rng::seed_from_u64(seed + k),
            ))
        })
        .fold(SquareMatrix::zeros(6), |acc, p| {
            acc.add(&p.scale(0.25)).expect("same dimension")
        });
    let fixed = ras_pass(&ds)
        .expect("positive sums")
        .sub(&ds)
        .expect("same dimension")
        .max_abs();
    vec![
        Check::new(
            "converges_to_tolerance",
            converged == 200,
            format!("{converged}/200 reached 1e-8 (max {max_iters} passes, n in 2..=60)"),
        ),
        Check::new(
            "single_pass_rows_exact",
            worst_row <= 1e-12,
            format!("max |row sum - 1| after one pass = {worst_row:e}"),
        ),
        Check::new(
            "column_sums_contract",
            monotone,
            "max column sum non-increasing and min non-decreasing over 5 passes".into(),
        ),
        Check::new(
            "doubly_stochastic_fixed_point",
            fixed <= 1e-12,
            format!("max change on a doubly stochastic input = {fixed:e}"),
        ),
        Check::new(
            "diagonal_scaling_invariance",
            worst_invariance <= 1e-6,
            format!(
                "max entry difference between limits of M and D1 M D2 = {worst_invariance:.3e}"
            ),
        ),
    ]
}

fn brute_force_lap(m: &SquareMatrix) -> (Permutation, f64) {
    let mut best: Option<(Permutation, f64)> = None;
    for p in Permutation::all(m.n()) {
        let v: f64 = p
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &j)| m[(i, j)])
            .sum();
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((p, v));
        }
    }
    best.expect("n >= 1")
}

fn rounding(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=7);
        let m = uniform_matrix(n, -1.0, 1.0, &mut rng);
        let (p, v) = brute_force_lap(&m);
        let lap = nearest_permutation_lap(&m);
        let lv: f64 = lap
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &j)| m[(i, j)])
            .sum();
        if lap == p && (lv - v).abs() <= 1e-12 {
            agree += 1;
        }
    }
    let mut argmax_agree = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=32);
        let p = random_permutation(n, &mut rng);
        let m = permutation_to_matrix(&p)
            .scale(0.6)
            .add(&uniform_matrix(n, 0.0, 0.5, &mut rng))
            .expect("same dimension");
        if round_argmax(&m).ok().as_ref() == Some(&p) && nearest_permutation_lap(&m) == p {
            argmax_agree += 1;
        }
    }
    let mut idempotent = true;
    for _ in 0..100 {
        let n = rng.random_range(1..=64);
        let p = random_permutation(n, &mut rng);
        idempotent &= nearest_permutation_lap(&permutation_to_matrix(&p)) == p;
    }
    let ties = nearest_permutation_lap(&SquareMatrix::filled(5, 0.2)) == Permutation::identity(5);
    vec![
        Check::new(
            "lap_matches_brute_force",
            agree == 500,
            format!("{agree}/500 random matrices with n <= 7"),
        ),
        Check::new(
            "argmax_agrees_when_dominant",
            argmax_agree == 100,
            format!("{argmax_agree}/100 diagonally dominant permuted matrices"),
        ),
        Check::new(
            "lap_is_idempotent",
            idempotent,
            "rounding a permutation matrix returns it (100 cases, n <= 64)".into(),
        ),
        Check::new(
            "ties_break_lexicographically",
            ties,
            "uniform 5x5 rounds to the identity".into(),
        ),
    ]
}
