use permrelax::gradcheck::{matrix_central_difference, max_relative_error};
use permrelax::optimizer::{initialize, run, step, Gradient, ObjectiveProblem, OptimizerConfig};
use permrelax::projection::{column_violation, constraint_violation};
use permrelax::qap::{QapInstance, QapKind, QapProblem};
use permrelax::*;
use proptest::prelude::*;

fn permutation(n: usize) -> impl Strategy<Value = Permutation> {
    Just((0..n).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_map(|m| Permutation::new(m).unwrap())
}

fn sized_permutation(max_n: usize) -> impl Strategy<Value = Permutation> {
    (1..=max_n).prop_flat_map(permutation)
}

fn matrix(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = SquareMatrix> {
    prop::collection::vec(lo..hi, n * n).prop_map(move |v| SquareMatrix::from_vec(n, v).unwrap())
}

fn sized_matrix(max_n: usize, lo: f64, hi: f64) -> impl Strategy<Value = SquareMatrix> {
    (1..=max_n).prop_flat_map(move |n| matrix(n, lo, hi))
}

fn lap_value(m: &SquareMatrix, p: &Permutation) -> f64 {
    p.as_slice()
        .iter()
        .enumerate()
        .map(|(i, &j)| m[(i, j)])
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn permutation_matrices_have_zero_penalty(p in sized_permutation(64)) {
        prop_assert!(penalty_value(&permutation_to_matrix(&p)).abs() <= 1e-12);
    }

    #[test]
    fn strict_mixtures_have_positive_penalty(
        (p, q) in (2usize..=32).prop_flat_map(|n| (permutation(n), permutation(n))),
        alpha in 0.01..0.99f64,
    ) {
        prop_assume!(p != q);
        let m = permutation_to_matrix(&p).scale(alpha).add(&permutation_to_matrix(&q).scale(1.0 - alpha)).unwrap();
        prop_assert!(penalty_value(&m) > 1e-6);
    }

    #[test]
    fn penalty_is_nonnegative_and_row_permutation_invariant(m in sized_matrix(12, -2.0, 2.0), seed in any::<u64>()) {
        let n = m.n();
        prop_assert!(penalty_value(&m) >= 0.0);
        let mut map: Vec<usize> = (0..n).collect();
        map.rotate_left((seed % n as u64) as usize);
        let p = permutation_to_matrix(&Permutation::new(map).unwrap());
        let moved = p.matmul(&m).unwrap().matmul(&p.transpose()).unwrap();
        prop_assert!((penalty_value(&moved) - penalty_value(&m)).abs() <= 1e-12 * (1.0 + penalty_value(&m)));
    }

    #[test]
    fn penalty_subgradient_matches_differences(m in sized_matrix(6, 0.05, 1.0)) {
        let numeric = matrix_central_difference(penalty_value, &m, 1e-6);
        let analytic = penalty_subgradient(&m, &PenaltyConfig::default());
        prop_assert!(max_relative_error(analytic.as_slice(), numeric.as_slice()) <= 1e-5);
    }

    #[test]
    fn matrix_round_trip(p in sized_permutation(64)) {
        prop_assert_eq!(matrix_to_permutation(&permutation_to_matrix(&p)).unwrap(), p);
    }

    #[test]
    fn single_pass_rows_are_exact(m in sized_matrix(60, 0.01, 1.0)) {
        let out = ras_pass(&m).unwrap();
        for s in out.row_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn column_scaling_is_absorbed(m in sized_matrix(10, 0.01, 1.0), c in 0.1..10.0f64) {
        let n = m.n();
        let d: Vec<f64> = (0..n).map(|j| c * (1.0 + j as f64)).collect();
        let scaled = SquareMatrix::from_fn(n, |i, j| m[(i, j)] * d[j]);
        let a = ras_pass(&m).unwrap();
        let b = ras_pass(&scaled).unwrap();
        prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-12);
        prop_assert!(ras_pass(&m.scale(c)).unwrap().sub(&a).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn column_violation_never_grows(m in sized_matrix(20, 0.01, 1.0)) {
        let mut cur = ras_pass(&m).unwrap();
        let mut prev = column_violation(&cur);
        for _ in 0..10 {
            cur = ras_pass(&cur).unwrap();
            let v = column_violation(&cur);
            prop_assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn zero_pattern_is_preserved(m in sized_matrix(8, -0.5, 1.0)) {
        let t = threshold_nonnegative(&m);
        prop_assume!(t.row_sums().iter().all(|&s| s > 0.0) && t.col_sums().iter().all(|&s| s > 0.0));
        let out = ras_pass(&t).unwrap();
        for (a, b) in t.as_slice().iter().zip(out.as_slice()) {
            prop_assert_eq!(*a == 0.0, *b == 0.0);
        }
    }

    #[test]
    fn sinkhorn_converges_on_positive_matrices(m in sized_matrix(30, 0.01, 1.0)) {
        let (out, _) = iterate_to_tolerance(&m, &ProjectionConfig::default()).unwrap();
        prop_assert!(constraint_violation(&out) <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn lap_matches_exhaustive_search(m in sized_matrix(7, -1.0, 1.0)) {
        let lap = nearest_permutation_lap(&m);
        let best = Permutation::all(m.n())
            .map(|p| lap_value(&m, &p))
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((lap_value(&m, &lap) - best).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn argmax_and_lap_agree_when_rows_pick_distinct_columns(p in sized_permutation(24), noise in prop::collection::vec(0.0..0.45f64, 24 * 24)) {
        let n = p.n();
        let m = SquareMatrix::from_fn(n, |i, j| noise[i * 24 + j] + if p.as_slice()[i] == j { 0.55 } else { 0.0 });
        prop_assert_eq!(round_argmax(&m).unwrap(), p.clone());
        prop_assert_eq!(nearest_permutation_lap(&m), p);
    }

    #[test]
    fn lap_is_equivariant_under_row_relabeling(m in matrix(6, 0.0, 1.0), p in permutation(6)) {
        // Relabeling rows by p relabels the assignment; random entries make it unique.
        let pm = permutation_to_matrix(&p);
        let moved = pm.matmul(&m).unwrap();
        let a = nearest_permutation_lap(&m);
        let b = nearest_permutation_lap(&moved);
        prop_assert_eq!(b, a.compose(&p).unwrap());
    }
}

/// Pulls `M` towards a fixed target, used to check optimizer invariants.
struct Target(SquareMatrix);

impl ObjectiveProblem for Target {
    fn dimensions(&self) -> Vec<usize> {
        vec![self.0.n()]
    }

    fn loss(&self, _: &[f64], m: &[SquareMatrix]) -> f64 {
        let d = m[0].sub(&self.0).unwrap();
        d.dot(&d).unwrap()
    }

    fn loss_gradient(&self, _: &[f64], m: &[SquareMatrix]) -> Gradient {
        Gradient {
            weights: vec![],
            matrices: vec![m[0].sub(&self.0).unwrap().scale(2.0)],
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn optimizer_iterates_stay_nonnegative_with_exact_rows(target in sized_matrix(8, -1.0, 1.0), seed in 0u64..1000, lambda in 0.0..0.5f64) {
        let problem = Target(target);
        let cfg = OptimizerConfig { lambda, learning_rate: 0.1, total_iterations: 30, seed, ..OptimizerConfig::default() };
        let mut state = initialize(&problem, &cfg).unwrap();
        for _ in 0..30 {
            if step(&problem, &mut state, &cfg).is_err() {
                // A fully thresholded column is a reported failure, not a silent NaN.
                return Ok(());
            }
            let m = &state.matrices[0];
            prop_assert!(m.min_entry() >= 0.0);
            for s in m.row_sums() {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn runs_are_deterministic_and_traces_nonnegative(seed in 0u64..1000) {
        let inst = QapInstance::random_uniform(4, seed, QapKind::GraphMatching);
        let problem = QapProblem { instance: &inst };
        let cfg = OptimizerConfig { lambda: 0.2, learning_rate: 0.02, total_iterations: 60, seed, ..OptimizerConfig::default() };
        let a = run(&problem, &cfg).unwrap();
        let b = run(&problem, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for r in &a.trace {
            prop_assert!(r.penalty >= 0.0);
            prop_assert!(r.constraint_violation >= 0.0);
        }
    }
}
