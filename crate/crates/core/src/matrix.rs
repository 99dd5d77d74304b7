//! Dense square matrices and exact permutations.
//!
//! `SquareMatrix` is the carrier for every relaxed permutation, adjacency
//! matrix and gradient in the crate. Storage is row-major and all entries are
//! finite after any public constructor.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used to recognise 0/1 entries of a permutation matrix.
pub const PERMUTATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    /// Builds a matrix from row-major data of length `n * n`.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        let m = Self { n, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(n, data)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                row: k / self.n.max(1),
                col: k % self.n.max(1),
            }),
            None => Ok(()),
        }
    }

    pub fn ensure_same_dim(&self, other: &SquareMatrix) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    pub fn transpose(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &SquareMatrix) -> Result<SquareMatrix> {
        self.ensure_same_dim(other)?;
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &SquareMatrix) -> Result<SquareMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SquareMatrix) -> Result<SquareMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> SquareMatrix {
        self.map(|x| c * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &SquareMatrix,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<SquareMatrix> {
        self.ensure_same_dim(other)?;
        Ok(SquareMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Frobenius inner product `<self, other>`.
    pub fn dot(&self, other: &SquareMatrix) -> Result<f64> {
        self.ensure_same_dim(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for i in 0..self.n {
            for (s, x) in sums.iter_mut().zip(self.row(i)) {
                *s += x;
            }
        }
        sums
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Spectral norm estimated by power iteration on `M^T M`.
    pub fn spectral_norm(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mtm = self.transpose().matmul(self).expect("same dimension");
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut eig = 0.0;
        for _ in 0..200 {
            let mut w = vec![0.0; n];
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = mtm.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm;
            v = w.into_iter().map(|x| x / norm).collect();
            if (next - eig).abs() <= 1e-12 * next {
                eig = next;
                break;
            }
            eig = next;
        }
        eig.sqrt()
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// An exact permutation stored as an index map: row `i` has its 1 in column
/// `map[i]`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &j in &map {
            if j >= n {
                return Err(Error::InvalidPermutation(format!(
                    "index {j} out of range for n = {n}"
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidPermutation(format!(
                    "index {j} appears more than once"
                )));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.map
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (i, &j) in self.map.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { map: inv }
    }

    /// `(self ∘ other)[i] = self[other[i]]`; as matrices this is `other · self`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: other.n(),
            });
        }
        Ok(Permutation {
            map: other.map.iter().map(|&k| self.map[k]).collect(),
        })
    }

    pub fn to_matrix(&self) -> SquareMatrix {
        permutation_to_matrix(self)
    }

    /// The lexicographically next permutation, or `None` at the last one.
    pub fn next_lexicographic(&self) -> Option<Permutation> {
        let mut map = self.map.clone();
        let k = (1..map.len()).rev().find(|&k| map[k - 1] < map[k])? - 1;
        let l = (k + 1..map.len()).rev().find(|&l| map[k] < map[l])?;
        map.swap(k, l);
        map[k + 1..].reverse();
        Some(Permutation { map })
    }

    /// All `n!` permutations in lexicographic order.
    pub fn all(n: usize) -> impl Iterator<Item = Permutation> {
        std::iter::successors(
            Some(Permutation::identity(n)),
            Permutation::next_lexicographic,
        )
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.map)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.map.iter().map(|j| j.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// A nonnegative square matrix kept close to the doubly stochastic set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedPermutation(SquareMatrix);

impl RelaxedPermutation {
    pub fn new(matrix: SquareMatrix) -> Result<Self> {
        for i in 0..matrix.n() {
            for j in 0..matrix.n() {
                if matrix[(i, j)] < 0.0 {
                    return Err(Error::Domain(format!(
                        "relaxed permutation has negative entry at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self(matrix))
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.0
    }
}

pub fn permutation_to_matrix(p: &Permutation) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(p.n());
    for (i, &j) in p.as_slice().iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m
}

/// Recovers the index map of an exact 0/1 permutation matrix.
pub fn matrix_to_permutation(m: &SquareMatrix) -> Result<Permutation> {
    let n = m.n();
    let mut map = Vec::with_capacity(n);
    let mut col_hits = vec![0usize; n];
    for i in 0..n {
        let mut one = None;
        for j in 0..n {
            let x = m[(i, j)];
            if (x - 1.0).abs() <= PERMUTATION_TOLERANCE {
                if one.is_some() {
                    return Err(Error::NotAPermutation(format!(
                        "row {i} has more than one unit entry"
                    )));
                }
                one = Some(j);
                col_hits[j] += 1;
            } else if x.abs() > PERMUTATION_TOLERANCE {
                return Err(Error::NotAPermutation(format!(
                    "entry ({i}, {j}) = {x} is neither 0 nor 1"
                )));
            }
        }
        match one {
            Some(j) => map.push(j),
            None => return Err(Error::NotAPermutation(format!("row {i} has no unit entry"))),
        }
    }
    if let Some(j) = col_hits.iter().position(|&c| c != 1) {
        return Err(Error::NotAPermutation(format!(
            "column {j} has {} unit entries",
            col_hits[j]
        )));
    }
    Ok(Permutation { map })
}

pub fn frobenius_distance(a: &SquareMatrix, b: &SquareMatrix) -> Result<f64> {
    a.ensure_same_dim(b)?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}
