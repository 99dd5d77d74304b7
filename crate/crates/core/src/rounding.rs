//! Rounding a relaxed matrix to an exact permutation.
//!
//! [`nearest_permutation_lap`] solves the linear assignment problem exactly,
//! maximizing `Σ_i m[i][π(i)]`, which is the same as minimizing `‖m − P‖_F`
//! over permutation matrices. [`round_argmax`] is the cheap row-wise rounding
//! that suffices once the relaxed matrix is close to a permutation.

use crate::error::{Error, Result};
use crate::matrix::{Permutation, SquareMatrix};

const NONE: usize = usize::MAX;

/// Exact nearest permutation (maximum-weight assignment).
///
/// Among optimal assignments the lexicographically smallest index map is
/// returned. Two assignments whose totals differ by less than roughly
/// `1e-9 · max|m|` are treated as tied.
pub fn nearest_permutation_lap(m: &SquareMatrix) -> Permutation {
    let n = m.n();
    if n == 0 {
        return Permutation::identity(0);
    }
    let scale = m.max_abs();
    let (mut row_col, u, v) = hungarian_min(m, scale);

    let tol = 1e-9 * (1.0 + scale);
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| (scale - m[(i, j)]) - u[i] - v[j] <= tol)
                .collect()
        })
        .collect();

    let mut col_owner = vec![NONE; n];
    for (i, &j) in row_col.iter().enumerate() {
        col_owner[j] = i;
    }
    lexicographic_refine(&tight, &mut row_col, &mut col_owner);
    Permutation::new(row_col).expect("assignment is a bijection")
}

/// Dense O(n³) Hungarian method on costs `scale − m`. Returns the row→column
/// assignment and dual potentials `(u, v)` with reduced costs
/// `c_ij − u_i − v_j ≥ 0`, tight on the assignment.
fn hungarian_min(m: &SquareMatrix, scale: f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = m.n();
    let cost = |i: usize, j: usize| scale - m[(i, j)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row (1-based) matched to column j; p[0] is the row being inserted.
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_col[p[j] - 1] = j - 1;
        }
    }
    (row_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Turns a perfect matching on the tight-edge graph into the lexicographically
/// smallest one: rows are fixed in order to their smallest feasible column.
fn lexicographic_refine(tight: &[Vec<usize>], row_col: &mut [usize], col_owner: &mut [usize]) {
    let n = row_col.len();
    let mut visited = vec![false; n];
    for i in 0..n {
        for &j in &tight[i] {
            let current = row_col[i];
            if current == j {
                break;
            }
            let k = col_owner[j];
            if k < i {
                continue;
            }
            // Tentatively give j to i; row k must then reach the freed column.
            row_col[i] = j;
            col_owner[j] = i;
            col_owner[current] = NONE;
            row_col[k] = NONE;
            visited.iter_mut().for_each(|x| *x = false);
            if augment(k, i, tight, row_col, col_owner, &mut visited) {
                break;
            }
            row_col[i] = current;
            col_owner[current] = i;
            col_owner[j] = k;
            row_col[k] = j;
        }
    }
}

/// Kuhn-style alternating path from `row` to the single free column, using
/// only rows strictly after `locked_upto`.
fn augment(
    row: usize,
    locked_upto: usize,
    tight: &[Vec<usize>],
    row_col: &mut [usize],
    col_owner: &mut [usize],
    visited: &mut [bool],
) -> bool {
    for &c in &tight[row] {
        if visited[c] {
            continue;
        }
        visited[c] = true;
        let owner = col_owner[c];
        let free = owner == NONE;
        if free
            || (owner > locked_upto
                && augment(owner, locked_upto, tight, row_col, col_owner, visited))
        {
            row_col[row] = c;
            col_owner[c] = row;
            return true;
        }
    }
    false
}

/// Row-wise argmax rounding (ties to the lowest column). Fails with
/// [`Error::Collision`] when two rows pick the same column.
pub fn round_argmax(m: &SquareMatrix) -> Result<Permutation> {
    let n = m.n();
    let mut map = Vec::with_capacity(n);
    for i in 0..n {
        let row = m.row(i);
        let mut best = 0;
        for j in 1..n {
            if row[j] > row[best] {
                best = j;
            }
        }
        map.push(best);
    }
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &j) in map.iter().enumerate() {
        owners[j].push(i);
    }
    if let Some(col) = owners.iter().position(|rows| rows.len() > 1) {
        return Err(Error::Collision {
            rows: owners[col].clone(),
            col,
        });
    }
    Permutation::new(map)
}
