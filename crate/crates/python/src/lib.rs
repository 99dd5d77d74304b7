//! Python bindings. Matrices cross the boundary as lists of rows and
//! permutations as index lists (`perm[i]` is the column of row `i`).

use permrelax::closed_form::{self, TwoLayerTeacher};
use permrelax::qap::{self, QapInstance, QapKind};
use permrelax::suites::{run_suite as run_core_suite, Suite};
use permrelax::{
    shuffle, OptimizerConfig, PenaltyConfig, Permutation, ProjectionConfig, SquareMatrix,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: permrelax::Error) -> PyErr {
    match e {
        permrelax::Error::NoConvergence { .. } | permrelax::Error::Run(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SquareMatrix> {
    SquareMatrix::from_rows(&rows).map_err(to_py)
}

fn instance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, kind: &str) -> PyResult<QapInstance> {
    let kind = match kind {
        "gm" => QapKind::GraphMatching,
        "qap" => QapKind::GeneralQap,
        other => {
            return Err(PyValueError::new_err(format!(
                "kind must be 'gm' or 'qap', got {other:?}"
            )))
        }
    };
    QapInstance::new(matrix(a)?, matrix(b)?, kind).map_err(to_py)
}

/// The l1-2 penalty summed over rows and columns.
#[pyfunction]
fn penalty_value(m: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(permrelax::penalty_value(&matrix(m)?))
}

/// Subgradient of the penalty (unweighted).
#[pyfunction]
fn penalty_subgradient(m: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let g = permrelax::penalty_subgradient(&matrix(m)?, &PenaltyConfig::default());
    Ok(g.to_rows())
}

/// One column then row normalization.
#[pyfunction]
fn ras_pass(m: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(permrelax::ras_pass(&matrix(m)?).map_err(to_py)?.to_rows())
}

/// Repeated RAS passes until every row and column sum is within `epsilon`
/// of one. Returns the matrix and the number of passes.
#[pyfunction]
#[pyo3(signature = (m, epsilon=1e-8, max_iters=10_000))]
fn sinkhorn(m: Vec<Vec<f64>>, epsilon: f64, max_iters: usize) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let cfg = ProjectionConfig {
        epsilon,
        max_iters,
        ..ProjectionConfig::default()
    };
    let (out, iters) = permrelax::iterate_to_tolerance(&matrix(m)?, &cfg).map_err(to_py)?;
    Ok((out.to_rows(), iters))
}

/// Permutation maximizing `sum_i m[i][perm[i]]`.
#[pyfunction]
fn nearest_permutation(m: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    Ok(permrelax::nearest_permutation_lap(&matrix(m)?).into_vec())
}

/// Row-wise argmax; raises ValueError when two rows pick the same column.
#[pyfunction]
fn round_argmax(m: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    Ok(permrelax::round_argmax(&matrix(m)?)
        .map_err(to_py)?
        .into_vec())
}

#[pyfunction]
fn permutation_to_matrix(perm: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
    let p = Permutation::new(perm).map_err(to_py)?;
    Ok(permrelax::permutation_to_matrix(&p).to_rows())
}

/// Penalized solve with restarts, plus the exhaustive optimum for n <= 10.
#[pyfunction]
#[pyo3(signature = (a, b, lam=None, restarts=qap::DEFAULT_RESTARTS, seed=0, kind="gm"))]
fn qap_solve<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    lam: Option<f64>,
    restarts: usize,
    seed: u64,
    kind: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = instance(a, b, kind)?;
    let lam = lam.unwrap_or_else(|| qap::default_lambda(&inst));
    let cfg = OptimizerConfig {
        seed,
        ..qap::default_config(&inst)
    };
    let sol = py
        .detach(|| qap::solve_penalized(&inst, lam, &cfg, restarts))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("lambda", lam)?;
    out.set_item("permutation", sol.permutation.into_vec())?;
    out.set_item("objective", sol.objective)?;
    out.set_item("relaxed", sol.relaxed.matrix().to_rows())?;
    out.set_item("relaxed_objective", sol.relaxed_objective)?;
    out.set_item("penalty", sol.penalty)?;
    out.set_item("seed", sol.seed)?;
    Ok(out)
}

/// Convex relaxation of graph matching; returns `(matrix, objective)`.
#[pyfunction]
#[pyo3(signature = (a, b, restarts=qap::DEFAULT_RESTARTS, seed=0))]
fn qap_convex(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    restarts: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let inst = instance(a, b, "gm")?;
    let cfg = OptimizerConfig {
        seed,
        ..qap::default_config(&inst)
    };
    let sol = py
        .detach(|| qap::solve_convex_relaxed(&inst, &cfg, restarts))
        .map_err(to_py)?;
    Ok((sol.relaxed.matrix().to_rows(), sol.objective))
}

/// Exhaustive optimum `(perm, objective)`, lexicographically first on ties.
#[pyfunction]
#[pyo3(signature = (a, b, kind="gm"))]
fn qap_oracle(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, kind: &str) -> PyResult<(Vec<usize>, f64)> {
    let (p, v) = qap::brute_force_oracle(&instance(a, b, kind)?).map_err(to_py)?;
    Ok((p.into_vec(), v))
}

#[pyfunction]
fn example1_f(q: f64, lam: f64) -> PyResult<f64> {
    closed_form::example1_f(q, lam).map_err(to_py)
}

#[pyfunction]
fn example2_f(q: f64, lam: f64) -> PyResult<f64> {
    closed_form::example2_f(q, lam).map_err(to_py)
}

/// Two-layer network loss with the default teacher and shortcut `m`.
#[pyfunction]
fn example3_loss(p: f64, m: f64) -> PyResult<f64> {
    let t = TwoLayerTeacher::reference_teacher(m).map_err(to_py)?;
    closed_form::example3_loss(p, &t).map_err(to_py)
}

#[pyfunction]
fn example3_f(p: f64, m: f64, lam: f64) -> PyResult<f64> {
    let t = TwoLayerTeacher::reference_teacher(m).map_err(to_py)?;
    closed_form::example3_f(p, &t, lam).map_err(to_py)
}

/// Sampling estimate of the example 3 loss: `(mean, std_error)`.
#[pyfunction]
#[pyo3(signature = (p, m, samples=1_000_000, seed=0))]
fn example3_loss_mc(
    py: Python<'_>,
    p: f64,
    m: f64,
    samples: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let t = TwoLayerTeacher::reference_teacher(m).map_err(to_py)?;
    let est = py
        .detach(|| closed_form::example3_loss_mc(p, &t, samples, seed))
        .map_err(to_py)?;
    Ok((est.mean, est.std_error))
}

#[pyfunction]
fn teacher_constant(m: f64) -> PyResult<f64> {
    let t = TwoLayerTeacher::reference_teacher(m).map_err(to_py)?;
    closed_form::teacher_constant(&t).map_err(to_py)
}

/// λ sweep on a synthetic shuffle task. `lambda_factors` are relative to the
/// loss curvature; the default sweep is `[0, default]`.
#[pyfunction]
#[pyo3(signature = (n, samples=None, noise=0.0, lambda_factors=None, seed=0, restarts=shuffle::DEFAULT_RESTARTS))]
fn shuffle_sweep<'py>(
    py: Python<'py>,
    n: usize,
    samples: Option<usize>,
    noise: f64,
    lambda_factors: Option<Vec<f64>>,
    seed: u64,
    restarts: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let (task, data) =
        shuffle::generate_task(n, samples.unwrap_or(32 * n), noise, seed).map_err(to_py)?;
    let objective = shuffle::shuffle_objective(&task, &data).map_err(to_py)?;
    let cfg = OptimizerConfig {
        seed,
        ..shuffle::default_config(&objective)
    };
    let factors = lambda_factors.unwrap_or(vec![0.0, shuffle::DEFAULT_LAMBDA_FACTOR]);
    let lambdas: Vec<f64> = factors.iter().map(|f| f * objective.lipschitz()).collect();
    let rows = py.detach(|| shuffle::lambda_sweep(&task, &objective, &lambdas, &cfg, restarts));
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("lambda", r.lambda)?;
            d.set_item("relaxed_loss", r.relaxed_loss)?;
            d.set_item("rounded_loss", r.rounded_loss)?;
            d.set_item("penalty", r.penalty)?;
            d.set_item("recovered", r.recovered)?;
            d.set_item("error", r.error)?;
            Ok(d)
        })
        .collect()
}

/// Runs a property suite; returns `(passed, report_lines)`.
#[pyfunction]
#[pyo3(signature = (name, seed=permrelax::suites::DEFAULT_SEED))]
fn run_suite(py: Python<'_>, name: &str, seed: u64) -> PyResult<(bool, Vec<String>)> {
    let suite: Suite = name.parse().map_err(to_py)?;
    let report = py.detach(|| run_core_suite(suite, seed));
    let lines = report.to_string().lines().map(String::from).collect();
    Ok((report.passed(), lines))
}

#[pymodule]
fn permrelax_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(penalty_value, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_subgradient, m)?)?;
    m.add_function(wrap_pyfunction!(ras_pass, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_permutation, m)?)?;
    m.add_function(wrap_pyfunction!(round_argmax, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_to_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(qap_solve, m)?)?;
    m.add_function(wrap_pyfunction!(qap_convex, m)?)?;
    m.add_function(wrap_pyfunction!(qap_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(example1_f, m)?)?;
    m.add_function(wrap_pyfunction!(example2_f, m)?)?;
    m.add_function(wrap_pyfunction!(example3_loss, m)?)?;
    m.add_function(wrap_pyfunction!(example3_f, m)?)?;
    m.add_function(wrap_pyfunction!(example3_loss_mc, m)?)?;
    m.add_function(wrap_pyfunction!(teacher_constant, m)?)?;
    m.add_function(wrap_pyfunction!(shuffle_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
