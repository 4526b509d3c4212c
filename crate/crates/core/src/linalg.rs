//! Minimal dense linear algebra for small matrices.
//!
//! The covariate dimension k is small in every intended use, so a plain
//! row-major `Vec<f64>` with Cholesky factorization covers everything the
//! estimators need (covariance inverses, least squares).

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("matrix has no rows".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Data("ragged matrix rows".into()));
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Lower Cholesky factor, or `None` if the matrix is not positive
    /// definite (within a scale-relative pivot tolerance).
    pub fn cholesky(&self) -> Option<Mat> {
        debug_assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max);
        let tol = scale.max(1.0) * 1e-12;
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for p in 0..j {
                    s -= l.get(i, p) * l.get(j, p);
                }
                if i == j {
                    if s <= tol {
                        return None;
                    }
                    l.set(i, i, s.sqrt());
                } else {
                    l.set(i, j, s / l.get(j, j));
                }
            }
        }
        Some(l)
    }

    /// Solves `self * x = b` given that `self` is SPD.
    pub fn spd_solve(&self, b: &[f64], context: &str) -> Result<Vec<f64>> {
        let l = self.cholesky().ok_or_else(|| Error::Singular {
            context: context.into(),
        })?;
        Ok(l.chol_solve(b))
    }

    /// Inverse of an SPD matrix via its Cholesky factor.
    pub fn spd_inverse(&self, context: &str) -> Result<Mat> {
        let l = self.cholesky().ok_or_else(|| Error::Singular {
            context: context.into(),
        })?;
        let n = self.rows;
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = l.chol_solve(&e);
            for (i, &v) in col.iter().enumerate() {
                inv.set(i, j, v);
            }
            e[j] = 0.0;
        }
        Ok(inv)
    }

    /// Forward/back substitution with `self` as a lower Cholesky factor.
    fn chol_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for (j, &yj) in y.iter().enumerate().take(i) {
                s -= self.get(i, j) * yj;
            }
            y[i] = s / self.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for (j, &xj) in x.iter().enumerate().skip(i + 1) {
                s -= self.get(j, i) * xj;
            }
            x[i] = s / self.get(i, i);
        }
        x
    }
}

/// Quadratic form (a-b)' W (a-b).
#[inline]
pub fn quad_form_diff(w: &Mat, a: &[f64], b: &[f64]) -> f64 {
    let k = a.len();
    let mut total = 0.0;
    for p in 0..k {
        let dp = a[p] - b[p];
        let mut inner = 0.0;
        for q in 0..k {
            inner += w.get(p, q) * (a[q] - b[q]);
        }
        total += dp * inner;
    }
    total
}

/// Least squares of `y` on rows of the design matrix via normal equations.
///
/// Errors with a singular context when the cross-product matrix is not
/// positive definite.
pub fn least_squares(design: &[&[f64]], y: &[f64], context: &str) -> Result<Vec<f64>> {
    let n = design.len();
    let p = design[0].len();
    if n <= p {
        return Err(Error::FittingSetTooSmall { rows: n, params: p });
    }
    let mut xtx = Mat::zeros(p, p);
    let mut xty = vec![0.0; p];
    for (row, &yi) in design.iter().zip(y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in a..p {
                let v = xtx.get(a, b) + row[a] * row[b];
                xtx.set(a, b, v);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx.set(a, b, xtx.get(b, a));
        }
    }
    xtx.spd_solve(&xty, context)
}
