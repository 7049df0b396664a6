//! Small dense linear algebra: Cholesky, square solves, and the minimum-norm
//! least-squares solve used for portfolio replication.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// `self · selfᵀ`
    pub fn mul_transpose(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.get(i, k) * self.get(j, k);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|k| self.get(i, k) * x[k]).sum())
            .collect()
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = a`.
///
/// Only the lower triangle of `a` is read.
pub fn cholesky(a: &SquareMatrix) -> Result<SquareMatrix> {
    let n = a.dim();
    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = libm::sqrt(diag);
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves the square system `a·x = b` by LU with partial pivoting.
/// Returns `None` when `a` is singular.
pub fn solve_square(a: &SquareMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.dim();
    let m = DMatrix::from_row_slice(n, n, &a.data);
    let rhs = DVector::from_column_slice(b);
    m.lu().solve(&rhs).map(|x| x.iter().copied().collect())
}

/// Minimum-norm least-squares solution of a (possibly rank-deficient) system.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub solution: Vec<f64>,
    /// Euclidean norm of `A·x − b`.
    pub residual: f64,
    pub rank: usize,
}

/// Solves `min ‖A·x − b‖` with minimum ‖x‖ through the SVD of `A`
/// (`A` is `rows × cols`, row-major). Singular values below
/// `max(rows, cols)·ε·σ_max` are treated as zero.
pub fn least_squares_min_norm(
    rows: usize,
    cols: usize,
    a_row_major: &[f64],
    b: &[f64],
) -> Result<LeastSquares> {
    if a_row_major.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            found: a_row_major.len(),
        });
    }
    if b.len() != rows {
        return Err(Error::LengthMismatch {
            expected: rows,
            found: b.len(),
        });
    }
    let a = DMatrix::from_row_slice(rows, cols, a_row_major);
    let rhs = DVector::from_column_slice(b);
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let eps = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::InvalidArgument(alloc::string::ToString::to_string(e)))?;
    let residual = (&a * &x - &rhs).norm();
    Ok(LeastSquares {
        solution: x.iter().copied().collect(),
        residual,
        rank,
    })
}
