use permrelax::optimizer::run;
use permrelax::shuffle::*;
use permrelax::{permutation_to_matrix, OptimizerConfig, SquareMatrix};

fn task(n: usize, noise: f64, seed: u64) -> (ShuffleTask, ShuffleObjective) {
    let (task, data) = generate_task(n, 32 * n, noise, seed).unwrap();
    let obj = shuffle_objective(&task, &data).unwrap();
    (task, obj)
}

#[test]
fn hidden_permutation_sits_at_the_noise_floor() {
    for (noise, seed) in [(0.0, 1), (0.1, 2), (0.5, 3)] {
        let (task, data) = generate_task(16, 512, noise, seed).unwrap();
        let obj = shuffle_objective(&task, &data).unwrap();
        let at_star = obj.loss_at(&permutation_to_matrix(&task.p_star)).unwrap();
        assert!(
            at_star <= noise * noise * 16.0 * 1.1 + 1e-9,
            "noise {noise}: {at_star}"
        );
    }
}

#[test]
fn uniform_matrix_is_far_worse_than_the_hidden_permutation() {
    for n in [4, 8, 16] {
        let (task, obj) = task(n, 0.0, 10 + n as u64);
        let star = obj.loss_at(&permutation_to_matrix(&task.p_star)).unwrap();
        let uniform = obj
            .loss_at(&SquareMatrix::filled(n, 1.0 / n as f64))
            .unwrap();
        assert!(star <= 1e-9);
        assert!(uniform > 1.0, "n={n}: {uniform}");
    }
}

#[test]
fn small_noise_free_task_is_consistent_with_its_permutation() {
    let (task, data) = generate_task(2, 20, 0.0, 4).unwrap();
    let teacher = task
        .w2
        .matmul(&permutation_to_matrix(&task.p_star))
        .unwrap()
        .matmul(&task.w1)
        .unwrap();
    for (x, y) in data.x.iter().zip(&data.y) {
        for i in 0..2 {
            let pred: f64 = (0..2).map(|j| teacher[(i, j)] * x[j]).sum();
            assert!((pred - y[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn sweep_shows_the_penalty_ordering_and_recovers_at_the_default() {
    let (task, obj) = task(8, 0.0, 21);
    let cfg = default_config(&obj);
    let tuned = cfg.lambda;
    let lambdas = [0.0, 0.1 * tuned, tuned, 3.0 * tuned];
    let rows = lambda_sweep(&task, &obj, &lambdas, &cfg, DEFAULT_RESTARTS);
    assert!(rows.iter().all(|r| r.error.is_none()));

    let max_penalty = rows.iter().map(|r| r.penalty).fold(0.0, f64::max);
    assert_eq!(rows[0].penalty, max_penalty, "{rows:?}");

    let row = &rows[2];
    assert!(row.recovered);
    assert!((row.rounded_loss - row.relaxed_loss).abs() <= 0.01 * row.relaxed_loss + 1e-9);

    let inversions = rows
        .windows(2)
        .filter(|w| w[1].penalty > w[0].penalty + 1e-12)
        .count();
    assert!(inversions <= 1, "{rows:?}");
}

#[test]
fn rounding_gap_shrinks_during_training() {
    let mut checked = 0;
    for seed in 0..6 {
        let (task, obj) = task(8, 0.0, 300 + seed);
        let cfg = default_config(&obj);
        let res = run(&obj, &cfg).unwrap();
        if res.rounded[0] != task.p_star {
            continue;
        }
        let t = cfg.total_iterations;
        let gap_at = |it: usize| {
            res.trace
                .iter()
                .find(|r| r.iteration == it)
                .map(|r| r.rounding_gap.abs())
                .unwrap()
        };
        assert!(gap_at(t) <= 0.1 * gap_at(t / 4), "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 4);
}

#[test]
fn joint_training_of_the_second_map_runs() {
    let (_, obj) = task(4, 0.0, 5);
    let obj = obj.with_learned_w2(true);
    let base = default_config(&obj);
    let cfg = OptimizerConfig {
        total_iterations: 400,
        learning_rate: 0.2 * base.learning_rate,
        ..base
    };
    let res = run(&obj, &cfg).unwrap();
    assert_eq!(res.final_weights.len(), 16);
    assert!(res.final_loss.is_finite());
    let first = res.trace.first().unwrap().loss;
    assert!(res.final_loss < first);
}

#[test]
fn sweep_csv_has_the_table_columns() {
    let (task, obj) = task(4, 0.0, 9);
    let cfg = default_config(&obj);
    let rows = lambda_sweep(&task, &obj, &[0.0, cfg.lambda], &cfg, 2);
    let mut out = Vec::new();
    write_sweep_csv(&mut out, &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SWEEP_CSV_HEADER));
    assert_eq!(lines.count(), 2);
}

#[test]
fn same_seed_same_task() {
    let a = generate_task(6, 60, 0.2, 8).unwrap();
    let b = generate_task(6, 60, 0.2, 8).unwrap();
    assert_eq!(a.0.p_star, b.0.p_star);
    assert_eq!(a.1.y, b.1.y);
    assert!(generate_task(6, 59, 0.0, 8).is_err());
    assert!(generate_task(1, 60, 0.0, 8).is_err());
}
