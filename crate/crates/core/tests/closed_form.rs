use permrelax::closed_form::*;
use permrelax::rounding::nearest_permutation_lap;
use permrelax::Permutation;
use proptest::prelude::*;

fn argmin<F: Fn(f64) -> f64>(f: F) -> (f64, f64) {
    grid_minimize(f, 0.0, 1.0, DEFAULT_GRID_POINTS)
}

#[test]
fn first_example_minimizers() {
    let (q, v) = argmin(|q| example1_f(q, 0.0).unwrap());
    assert!((q - 2.0 / 3.0).abs() < 1e-6);
    assert!((v + 2.0 / 3.0).abs() < 1e-12);
    for lambda in [1.0, 1.5, 2.0] {
        let (q, _) = argmin(|q| example1_f(q, lambda).unwrap());
        assert!((q - 1.0).abs() < 1e-6, "lambda {lambda}: {q}");
    }
}

#[test]
fn first_example_minimizer_moves_continuously_below_one() {
    // Interior stationary point of 6q² − 8q + 2 − 4λ√s; it reaches q = 1 at λ = 1.
    let (q, _) = argmin(|q| example1_f(q, 0.25).unwrap());
    assert!(q > 2.0 / 3.0 && q < 1.0, "{q}");
}

#[test]
fn second_example_minimizers() {
    let (q, _) = argmin(|q| example2_f(q, 0.0).unwrap());
    assert!((q - 0.5).abs() < 1e-6);
    let (q, _) = argmin(|q| example2_f(q, 1.0).unwrap());
    assert!((q - 0.5).abs() < 1e-6);
    for lambda in [1.8, 1.9] {
        let mins = grid_local_minima(
            |q| example2_f(q, lambda).unwrap(),
            0.0,
            1.0,
            DEFAULT_GRID_POINTS,
        );
        assert_eq!(mins.len(), 2, "lambda {lambda}: {mins:?}");
        assert!((mins[0].0 + mins[1].0 - 1.0).abs() < 1e-6);
        assert!((mins[0].1 - mins[1].1).abs() < 1e-9);
    }
    let mins = grid_local_minima(
        |q| example2_f(q, 2.0).unwrap(),
        0.0,
        1.0,
        DEFAULT_GRID_POINTS,
    );
    let args: Vec<f64> = mins.iter().map(|m| m.0).collect();
    assert_eq!(args, vec![0.0, 1.0]);
    assert!(mins.iter().all(|m| (m.1 + 4.0).abs() < 1e-12));
}

#[test]
fn interior_minima_follow_the_critical_point_equation() {
    for lambda in [1.5, 1.7, 1.8, 1.9, 1.99] {
        let (lo, hi) = example2_interior_minima(lambda).unwrap();
        let s = lo * lo + (1.0 - lo) * (1.0 - lo);
        assert!((s - lambda * lambda / 4.0).abs() < 1e-12);
        let mins = grid_local_minima(
            |q| example2_f(q, lambda).unwrap(),
            0.0,
            1.0,
            DEFAULT_GRID_POINTS,
        );
        assert_eq!(mins.len(), 2);
        assert!((mins[0].0 - lo).abs() < 1e-6);
        assert!((mins[1].0 - hi).abs() < 1e-6);
    }
}

#[test]
fn penalized_and_convex_minimizers_separate() {
    let (convex, _) = argmin(|q| example1_f(q, 0.0).unwrap());
    let (penalized, _) = argmin(|q| example1_f(q, 1.5).unwrap());
    assert!(convex > 0.01 && convex < 0.99);
    assert!(penalized == 0.0 || (penalized - 1.0).abs() < 1e-6);

    let t = TwoLayerTeacher::reference_teacher(1.0).unwrap();
    let (p0, _) = argmin(|p| example3_f(p, &t, 0.0).unwrap());
    let (p4, _) = argmin(|p| example3_f(p, &t, 0.4).unwrap());
    assert!(p0 > 0.5 && p0 < 0.6, "{p0}");
    assert_eq!(p0.round(), 1.0);
    assert_eq!(p4.round(), 0.0);
    // The endpoint picked by the penalty is the better permutation.
    assert!(example3_loss(0.0, &t).unwrap() < example3_loss(1.0, &t).unwrap());
}

#[test]
fn rounding_the_relaxed_example3_minimizer_uses_the_lap() {
    let t = TwoLayerTeacher::reference_teacher(1.0).unwrap();
    let (p, _) = argmin(|p| example3_loss(p, &t).unwrap());
    let q = BirkhoffLine2::new(p).unwrap().matrix();
    assert_eq!(nearest_permutation_lap(&q), Permutation::identity(2));
}

#[test]
fn example3_without_shortcut_has_two_interior_minima() {
    let t = TwoLayerTeacher::reference_teacher(0.0).unwrap();
    let mins = grid_local_minima(
        |p| example3_loss(p, &t).unwrap(),
        0.0,
        1.0,
        DEFAULT_GRID_POINTS,
    );
    assert_eq!(mins.len(), 2, "{mins:?}");
    for (p, _) in &mins {
        assert!(*p > 0.05 && *p < 0.95);
    }
    assert!((mins[0].0 + mins[1].0 - 1.0).abs() < 1e-6);
}

#[test]
fn example3_closed_form_matches_sampling() {
    for m in [0.0, 1.0] {
        let t = TwoLayerTeacher::reference_teacher(m).unwrap();
        for k in [0, 3, 10, 15, 19] {
            let p = k as f64 / 19.0;
            let est = example3_loss_mc(p, &t, 1_000_000, 77 + k).unwrap();
            let exact = example3_loss(p, &t).unwrap();
            assert!(est.z_score(exact) < 4.0, "m={m} p={p}: {exact} vs {est:?}");
        }
    }
}

#[test]
fn gaussian_inputs_are_sampled_only() {
    let t =
        TwoLayerTeacher::new(1.0, 1.0 / 3.0, 2.0 / 3.0, 0.25, 0.75, InputLaw::Gaussian).unwrap();
    assert!(example3_loss(0.5, &t).is_err());
    let a = example3_loss_mc(0.5, &t, 200_000, 3).unwrap();
    let b = example3_loss_mc(0.5, &t, 200_000, 3).unwrap();
    assert_eq!(a, b);
    assert!(a.mean > 0.0 && a.std_error > 0.0);
    // A student equal to a permutation teacher has zero loss under any law.
    let perm = TwoLayerTeacher::new(1.0, 1.0, 0.0, 0.0, 1.0, InputLaw::Gaussian).unwrap();
    assert_eq!(example3_loss_mc(1.0, &perm, 10_000, 1).unwrap().mean, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_moment_is_symmetric(q in 0.0..3.0f64, r in 0.0..3.0f64, s in 0.0..3.0f64, t in 0.0..3.0f64) {
        prop_assume!(q + r > 1e-3 && s + t > 1e-3);
        let a = relu_cross_moment(q, r, s, t).unwrap();
        let b = relu_cross_moment(s, t, q, r).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn cross_moment_is_bilinearly_homogeneous(q in 0.01..2.0f64, r in 0.01..2.0f64, s in 0.01..2.0f64, t in 0.01..2.0f64, c in 0.1..5.0f64) {
        let a = relu_cross_moment(q, r, s, t).unwrap();
        let b = relu_cross_moment(c * q, c * r, s, t).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-10 * (1.0 + b.abs()));
    }

    #[test]
    fn cross_moment_respects_cauchy_schwarz(q in 0.0..3.0f64, r in 0.0..3.0f64, s in 0.0..3.0f64, t in 0.0..3.0f64) {
        prop_assume!(q + r > 1e-3 && s + t > 1e-3);
        let a = relu_cross_moment(q, r, s, t).unwrap();
        let bound = (relu_cross_moment(q, r, q, r).unwrap() * relu_cross_moment(s, t, s, t).unwrap()).sqrt();
        prop_assert!(a >= 0.0);
        prop_assert!(a <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn penalty_term_only_lowers_example3(p in 0.0..=1.0f64, l1 in 0.0..1.0f64, dl in 0.0..1.0f64) {
        let t = TwoLayerTeacher::reference_teacher(1.0).unwrap();
        prop_assert!(example3_f(p, &t, l1 + dl).unwrap() <= example3_f(p, &t, l1).unwrap());
    }
}

#[test]
fn squared_terms_match_sampling_at_random_points() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for k in 0..20 {
        let m: f64 = rng.random_range(0.0..2.0);
        let p: f64 = rng.random_range(0.0..1.0);
        let est = mc_expectation(InputLaw::UniformSquare, 400_000, 1000 + k, |x1, x2| {
            let v = ((m + p) * x1 + (1.0 - p) * x2).max(0.0);
            v * v
        });
        let exact = 2.0 / 3.0 * ((m + p) * (m + p) + (1.0 - p) * (1.0 - p));
        assert!(est.z_score(exact) < 4.0, "m={m} p={p}: {exact} vs {est:?}");
    }
}
