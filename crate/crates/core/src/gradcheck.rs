//! Central finite differences for auditing analytic gradients.

use crate::matrix::SquareMatrix;

/// Central-difference gradient of `f` at `point`.
pub fn central_difference<F>(f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = point.to_vec();
    (0..point.len())
        .map(|k| {
            probe[k] = point[k] + step;
            let plus = f(&probe);
            probe[k] = point[k] - step;
            let minus = f(&probe);
            probe[k] = point[k];
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Central-difference gradient of a matrix function.
pub fn matrix_central_difference<F>(f: F, m: &SquareMatrix, step: f64) -> SquareMatrix
where
    F: Fn(&SquareMatrix) -> f64,
{
    let n = m.n();
    let grad = central_difference(
        |x| f(&SquareMatrix::from_vec(n, x.to_vec()).expect("finite probe")),
        m.as_slice(),
        step,
    );
    SquareMatrix::from_vec(n, grad).expect("finite differences")
}

/// Largest entrywise error relative to `max(1, |reference|)`.
pub fn max_relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(analytic.len(), reference.len());
    analytic
        .iter()
        .zip(reference)
        .map(|(a, r)| (a - r).abs() / r.abs().max(1.0))
        .fold(0.0, f64::max)
}
