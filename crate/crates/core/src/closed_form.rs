//! One-parameter analytic landscapes on the 2×2 Birkhoff line
//! `Q(q) = [[q, 1−q], [1−q, q]]`.
//!
//! Examples 1 and 2 are the graph-matching instances of [`crate::qap`]
//! restricted to that line, with the penalty written as `−4λ√(q² + (1−q)²)`
//! (that is `λ·P(Q(q))` minus the constant `4λ`). Example 3 is the squared
//! loss of a two-layer ReLU student `‖φ((mI + W)x)‖₁` against a teacher of
//! the same shape, with `x` uniform on `[−1, 1]²`.
//!
//! Expectations under the uniform law follow the unnormalized convention
//! `E[g] = ∫_{[−1,1]²} g(x) dx` (total mass 4). That is the convention in
//! which `E φ(q x₁ + r x₂)² = (2/3)(q² + r²)` and the teacher constant for
//! `(1/3, 2/3, 1/4, 3/4)` is `8113/5184`. Gaussian expectations are ordinary
//! probability expectations and are available only by sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

/// `Q(q) = [[q, 1−q], [1−q, q]]` with `q ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffLine2 {
    q: f64,
}

impl BirkhoffLine2 {
    pub fn new(q: f64) -> Result<Self> {
        check_unit(q, "q")?;
        Ok(Self { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn matrix(&self) -> SquareMatrix {
        let q = self.q;
        SquareMatrix::from_rows(&[[q, 1.0 - q], [1.0 - q, q]]).expect("finite entries")
    }
}

fn check_unit(x: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} lies outside [0, 1]")))
    }
}

/// `√(q² + (1−q)²)`, the row l2 norm of `Q(q)`.
fn line_norm(q: f64) -> f64 {
    (q * q + (1.0 - q) * (1.0 - q)).sqrt()
}

/// `6q² − 8q + 2 − 4λ√(q² + (1−q)²)`.
pub fn example1_f(q: f64, lambda: f64) -> Result<f64> {
    check_unit(q, "q")?;
    Ok(6.0 * q * q - 8.0 * q + 2.0 - 4.0 * lambda * line_norm(q))
}

/// `4s − 4λ√s` with `s = q² + (1−q)²`.
pub fn example2_f(q: f64, lambda: f64) -> Result<f64> {
    check_unit(q, "q")?;
    let s = q * q + (1.0 - q) * (1.0 - q);
    Ok(4.0 * s - 4.0 * lambda * s.sqrt())
}

/// Interior critical points of [`example2_f`] other than `q = 1/2`: the roots
/// of `q² + (1−q)² = λ²/4`, present for `λ ∈ (√2, 2)`.
pub fn example2_interior_minima(lambda: f64) -> Option<(f64, f64)> {
    let disc = lambda * lambda / 2.0 - 1.0;
    if disc <= 0.0 || lambda >= 2.0 {
        return None;
    }
    let h = disc.sqrt() / 2.0;
    Some((0.5 - h, 0.5 + h))
}

/// `I(q, r, s, t) = E[φ(q x₁ + r x₂) φ(s x₁ + t x₂)]` for `x` uniform on
/// `[−1, 1]²` (unnormalized, see the module docs).
///
/// Closed form for nonnegative weights with nonzero rows. When `qt < rs`
/// the arguments are swapped, using `I(q, r, s, t) = I(s, t, q, r)`.
pub fn relu_cross_moment(q: f64, r: f64, s: f64, t: f64) -> Result<f64> {
    if [q, r, s, t].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Domain(format!(
            "weights must be finite and nonnegative, got ({q}, {r}, {s}, {t})"
        )));
    }
    if !(q + r > 0.0 && s + t > 0.0) {
        return Err(Error::Domain("both weight rows must be nonzero".into()));
    }
    if q * t >= r * s {
        Ok(cross_moment_ordered(q, r, s, t))
    } else {
        Ok(cross_moment_ordered(s, t, q, r))
    }
}

/// The three branches, valid for `qt ≥ rs`, `q + r > 0`, `s + t > 0`.
fn cross_moment_ordered(q: f64, r: f64, s: f64, t: f64) -> f64 {
    if q < r {
        2.0 / 3.0 * (q * s + r * t)
            + q * q * (q * t - 3.0 * r * s) / (24.0 * r * r)
            + s * s * (3.0 * q * t - r * s) / (24.0 * t * t)
    } else if t >= s {
        (q * s + r * t) / 3.0
            + (q * t + r * s) / 4.0
            + (r * r / (q * q) + s * s / (t * t)) * (3.0 * q * t - r * s) / 24.0
    } else {
        2.0 / 3.0 * (q * s + r * t)
            + r * r * (3.0 * q * t - r * s) / (24.0 * q * q)
            + t * t * (q * t - 3.0 * r * s) / (24.0 * s * s)
    }
}

/// Input distribution for Example 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputLaw {
    /// Uniform on `[−1, 1]²`; closed forms available.
    UniformSquare,
    /// Standard normal on `R²`; sampling only.
    Gaussian,
}

/// Teacher `f_m(x, W*) = ‖φ((mI + W*)x)‖₁` with `W* = [[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerTeacher {
    pub m: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub input_law: InputLaw,
}

impl TwoLayerTeacher {
    pub fn new(m: f64, a: f64, b: f64, c: f64, d: f64, input_law: InputLaw) -> Result<Self> {
        if [m, a, b, c, d]
            .iter()
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return Err(Error::Domain(format!(
                "teacher parameters must be finite and nonnegative, got m={m}, W*=[[{a}, {b}], [{c}, {d}]]"
            )));
        }
        Ok(Self {
            m,
            a,
            b,
            c,
            d,
            input_law,
        })
    }

    /// `W* = [[1/3, 2/3], [1/4, 3/4]]` under the uniform law.
    pub fn reference_teacher(m: f64) -> Result<Self> {
        Self::new(m, 1.0 / 3.0, 2.0 / 3.0, 0.25, 0.75, InputLaw::UniformSquare)
    }

    /// Rows of `mI + W*`.
    fn rows(&self) -> [(f64, f64); 2] {
        [(self.m + self.a, self.b), (self.c, self.m + self.d)]
    }

    fn require_uniform(&self) -> Result<()> {
        match self.input_law {
            InputLaw::UniformSquare => Ok(()),
            InputLaw::Gaussian => Err(Error::Domain(
                "closed forms exist only for the uniform input law".into(),
            )),
        }
    }
}

/// Rows of `mI + W(p)` for the student `W(p) = Q(p)`.
fn student_rows(m: f64, p: f64) -> [(f64, f64); 2] {
    [(m + p, 1.0 - p), (1.0 - p, m + p)]
}

/// `E[f_m(x, W*)²] = (2/3)·Σ (row entries)² + 2·I(row₁, row₂)`.
pub fn teacher_constant(teacher: &TwoLayerTeacher) -> Result<f64> {
    teacher.require_uniform()?;
    let [(a, b), (c, d)] = teacher.rows();
    Ok(2.0 / 3.0 * (a * a + b * b + c * c + d * d) + 2.0 * relu_cross_moment(a, b, c, d)?)
}

/// `l_m(p) = E[f_m(x, W(p)) − f_m(x, W*)]²`, expanded into squared terms,
/// the student cross term `I(m+p, 1−p, 1−p, m+p)`, the student-teacher
/// terms and [`teacher_constant`].
pub fn example3_loss(p: f64, teacher: &TwoLayerTeacher) -> Result<f64> {
    check_unit(p, "p")?;
    teacher.require_uniform()?;
    let m = teacher.m;
    let student = student_rows(m, p);
    let (u, v) = student[0];
    let squares = 2.0 * (2.0 / 3.0) * (u * u + v * v);
    let cross = 2.0 * relu_cross_moment(u, v, v, u)?;
    let mut mixed = 0.0;
    for &(q, r) in &student {
        for &(s, t) in &teacher.rows() {
            mixed += relu_cross_moment(q, r, s, t)?;
        }
    }
    Ok(squares + cross - 2.0 * mixed + teacher_constant(teacher)?)
}

/// `l_m(p) − 4λ√(p² + (1−p)²)`.
pub fn example3_f(p: f64, teacher: &TwoLayerTeacher, lambda: f64) -> Result<f64> {
    Ok(example3_loss(p, teacher)? - 4.0 * lambda * line_norm(p))
}

/// A sampled expectation with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// `|value − mean|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (value - self.mean).abs() / self.std_error.max(f64::MIN_POSITIVE)
    }
}

const MC_CHUNKS: u64 = 64;

/// Estimates `E[g(x₁, x₂)]` from `samples` draws of `law`, reproducibly for a
/// given `seed` regardless of thread count. Uniform estimates are scaled by
/// the square's area, matching the closed-form convention.
pub fn mc_expectation<G>(law: InputLaw, samples: usize, seed: u64, g: G) -> McEstimate
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let samples = samples.max(2);
    let chunks = MC_CHUNKS.min(samples as u64);
    let base = samples as u64 / chunks;
    let extra = samples as u64 % chunks;
    let (sum, sum_sq) = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let count = base + u64::from(k < extra);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let (x1, x2) = match law {
                    InputLaw::UniformSquare => {
                        (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    }
                    InputLaw::Gaussian => (
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ),
                };
                let y = g(x1, x2);
                s += y;
                s2 += y * y;
            }
            (s, s2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    let scale = match law {
        InputLaw::UniformSquare => 4.0,
        InputLaw::Gaussian => 1.0,
    };
    McEstimate {
        mean: scale * mean,
        std_error: scale * (var / n).sqrt(),
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `f_m(x, ·)` for the given rows of `mI + W`.
fn network(rows: &[(f64, f64); 2], x1: f64, x2: f64) -> f64 {
    rows.iter().map(|&(u, v)| relu(u * x1 + v * x2)).sum()
}

/// Sampled `l_m(p)`, evaluated directly from the network definition.
pub fn example3_loss_mc(
    p: f64,
    teacher: &TwoLayerTeacher,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_unit(p, "p")?;
    let student = student_rows(teacher.m, p);
    let rows = teacher.rows();
    Ok(mc_expectation(
        teacher.input_law,
        samples,
        seed,
        |x1, x2| {
            let diff = network(&student, x1, x2) - network(&rows, x1, x2);
            diff * diff
        },
    ))
}

/// Sampled [`relu_cross_moment`] under the uniform law.
pub fn relu_cross_moment_mc(
    q: f64,
    r: f64,
    s: f64,
    t: f64,
    samples: usize,
    seed: u64,
) -> McEstimate {
    mc_expectation(InputLaw::UniformSquare, samples, seed, |x1, x2| {
        relu(q * x1 + r * x2) * relu(s * x1 + t * x2)
    })
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

const REFINE_TOL: f64 = 1e-9;

fn grid<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let points = points.max(3);
    let h = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points)
        .map(|k| {
            if k == points - 1 {
                hi
            } else {
                lo + k as f64 * h
            }
        })
        .collect();
    let ys = xs.iter().map(|&x| f(x)).collect();
    (xs, ys)
}

/// Golden-section refinement of grid cell `k`. The refined point replaces the
/// grid point only if it is lower by more than rounding noise, so exact ties
/// (flat functions, symmetric endpoints) keep the grid answer.
fn refine<F: Fn(f64) -> f64>(f: &F, xs: &[f64], ys: &[f64], k: usize) -> (f64, f64) {
    let lo = xs[k.saturating_sub(1)];
    let hi = xs[(k + 1).min(xs.len() - 1)];
    let (xr, yr) = golden_section(f, lo, hi, REFINE_TOL);
    if yr < ys[k] - 4.0 * f64::EPSILON * ys[k].abs() {
        (xr, yr)
    } else {
        (xs[k], ys[k])
    }
}

/// Global minimum of `f` on `[lo, hi]`: a uniform grid of `points` values
/// (at least 3), then golden-section refinement around the best grid point
/// to width `1e−9`. Ties go to the lowest argument.
pub fn grid_minimize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let (xs, ys) = grid(&f, lo, hi, points);
    let mut best = 0;
    for k in 1..ys.len() {
        if ys[k] < ys[best] {
            best = k;
        }
    }
    refine(&f, &xs, &ys, best)
}

/// Every local minimum visible on the grid, refined as in [`grid_minimize`]
/// and sorted by argument. A grid point qualifies if it is strictly below its
/// left neighbour and not above its right one.
pub fn grid_local_minima<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    points: usize,
) -> Vec<(f64, f64)> {
    let (xs, ys) = grid(&f, lo, hi, points);
    let last = ys.len() - 1;
    (0..=last)
        .filter(|&k| (k == 0 || ys[k] < ys[k - 1]) && (k == last || ys[k] <= ys[k + 1]))
        .map(|k| refine(&f, &xs, &ys, k))
        .collect()
}

/// Default resolution for the curve minimizers.
pub const DEFAULT_GRID_POINTS: usize = 1001;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::penalty_value;
    use crate::qap::{gm_objective, QapInstance};

    #[test]
    fn example1_matches_graph_matching_plus_penalty() {
        let inst = QapInstance::example1();
        for &q in &[0.0, 0.1, 0.5, 2.0 / 3.0, 0.97, 1.0] {
            let line = BirkhoffLine2::new(q).unwrap().matrix();
            for &lambda in &[0.0, 0.5, 1.7] {
                let via_matrix = gm_objective(&inst, &line).unwrap() - 1.0
                    + lambda * (penalty_value(&line) - 4.0);
                assert!((example1_f(q, lambda).unwrap() - via_matrix).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn example2_matches_graph_matching_plus_penalty() {
        let inst = QapInstance::example2();
        for &q in &[0.0, 0.3, 0.5, 1.0] {
            let line = BirkhoffLine2::new(q).unwrap().matrix();
            let via_matrix =
                gm_objective(&inst, &line).unwrap() + 2.0 * (penalty_value(&line) - 4.0);
            assert!((example2_f(q, 2.0).unwrap() - via_matrix).abs() < 1e-12);
        }
        assert_eq!(example2_f(0.0, 2.0).unwrap(), -4.0);
        assert_eq!(example2_f(1.0, 2.0).unwrap(), -4.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(example1_f(1.5, 0.0), Err(Error::Domain(_))));
        assert!(matches!(example2_f(-0.1, 0.0), Err(Error::Domain(_))));
        assert!(BirkhoffLine2::new(2.0).is_err());
        assert!(relu_cross_moment(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(relu_cross_moment(0.0, 0.0, 1.0, 1.0).is_err());
        let t = TwoLayerTeacher::reference_teacher(0.0).unwrap();
        assert!(example3_loss(1.01, &t).is_err());
        let g = TwoLayerTeacher {
            input_law: InputLaw::Gaussian,
            ..t
        };
        assert!(example3_loss(0.5, &g).is_err());
        assert!(TwoLayerTeacher::new(-1.0, 0.0, 0.0, 0.0, 0.0, InputLaw::UniformSquare).is_err());
    }

    #[test]
    fn cross_moment_one_dimensional_case() {
        // ∫∫ φ(x₁)² over the square = 2 · ∫₀¹ x² dx = 2/3.
        assert!((relu_cross_moment(1.0, 0.0, 1.0, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // Orthogonal half-planes: ∫₀¹∫₀¹ x₁ x₂ = 1/4.
        assert!((relu_cross_moment(1.0, 0.0, 0.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn squared_term_closed_form() {
        for &(q, r) in &[(1.0, 0.0), (0.3, 0.7), (2.0, 0.5), (1.0, 1.0)] {
            let v = relu_cross_moment(q, r, q, r).unwrap();
            assert!(
                (v - 2.0 / 3.0 * (q * q + r * r)).abs() < 1e-13,
                "({q}, {r})"
            );
        }
    }

    #[test]
    fn branches_agree_on_boundaries() {
        // q = r boundary between the first two branches (t ≥ s).
        for &(q, s, t) in &[(0.4, 0.2, 0.9), (1.0, 0.0, 1.0), (0.7, 0.5, 0.6)] {
            let below = cross_moment_ordered(q - 1e-12, q, s, t);
            let at = cross_moment_ordered(q, q, s, t);
            assert!((below - at).abs() < 1e-9);
        }
        // t = s boundary between the last two branches (q ≥ r).
        for &(q, r, s) in &[(0.9, 0.2, 0.4), (1.0, 0.0, 1.0), (0.6, 0.5, 0.7)] {
            let below = cross_moment_ordered(q, r, s + 1e-12, s);
            let at = cross_moment_ordered(q, r, s, s);
            assert!((below - at).abs() < 1e-9);
        }
    }

    #[test]
    fn teacher_constant_value() {
        let t = TwoLayerTeacher::reference_teacher(0.0).unwrap();
        assert!((teacher_constant(&t).unwrap() - 8113.0 / 5184.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_teacher_is_recovered() {
        let t = TwoLayerTeacher::new(0.0, 1.0, 0.0, 0.0, 1.0, InputLaw::UniformSquare).unwrap();
        assert!(example3_loss(1.0, &t).unwrap().abs() < 1e-14);
        // Without the shortcut the student's l1 sum ignores row order, so
        // p = 0 is just as good as p = 1.
        assert!(example3_loss(0.0, &t).unwrap().abs() < 1e-14);
        let (p, v) = grid_minimize(|p| example3_loss(p, &t).unwrap(), 0.0, 1.0, 201);
        assert!(!(1e-6..=1.0 - 1e-6).contains(&p), "{p}");
        assert!(v.abs() < 1e-12);
        // The shortcut breaks the symmetry in favour of p = 1.
        let t = TwoLayerTeacher { m: 1.0, ..t };
        let (p, v) = grid_minimize(|p| example3_loss(p, &t).unwrap(), 0.0, 1.0, 201);
        assert!((p - 1.0).abs() < 1e-6);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn example3_f_lambda_zero_and_monotone() {
        let t = TwoLayerTeacher::reference_teacher(1.0).unwrap();
        for k in 0..=10 {
            let p = k as f64 / 10.0;
            let l = example3_loss(p, &t).unwrap();
            assert_eq!(example3_f(p, &t, 0.0).unwrap(), l);
            assert!(example3_f(p, &t, 0.4).unwrap() < example3_f(p, &t, 0.1).unwrap());
        }
    }

    #[test]
    fn grid_minimize_examples() {
        let (x, v) = grid_minimize(|q| example1_f(q, 0.0).unwrap(), 0.0, 1.0, 101);
        assert!((x - 2.0 / 3.0).abs() < 1e-6);
        assert!((v + 2.0 / 3.0).abs() < 1e-12);
        let (x, v) = grid_minimize(|_| 3.0, -1.0, 1.0, 11);
        assert_eq!((x, v), (-1.0, 3.0));
        let (x, v) = grid_minimize(|q| example2_f(q, 2.0).unwrap(), 0.0, 1.0, 101);
        assert_eq!(x, 0.0);
        assert_eq!(v, -4.0);
    }

    #[test]
    fn local_minima_of_example2() {
        let mins = grid_local_minima(|q| example2_f(q, 1.8).unwrap(), 0.0, 1.0, 1001);
        let (lo, hi) = example2_interior_minima(1.8).unwrap();
        assert_eq!(mins.len(), 2);
        assert!((mins[0].0 - lo).abs() < 1e-6);
        assert!((mins[1].0 - hi).abs() < 1e-6);
        let mins = grid_local_minima(|q| example2_f(q, 1.0).unwrap(), 0.0, 1.0, 1001);
        assert_eq!(mins.len(), 1);
        assert!((mins[0].0 - 0.5).abs() < 1e-6);
        assert!(example2_interior_minima(1.0).is_none());
        assert!(example2_interior_minima(2.0).is_none());
    }

    #[test]
    fn mc_is_reproducible() {
        let a = relu_cross_moment_mc(0.3, 0.7, 0.2, 0.8, 10_000, 9);
        let b = relu_cross_moment_mc(0.3, 0.7, 0.2, 0.8, 10_000, 9);
        assert_eq!(a, b);
        let exact = relu_cross_moment(0.3, 0.7, 0.2, 0.8).unwrap();
        assert!(a.z_score(exact) < 4.0);
    }
}
