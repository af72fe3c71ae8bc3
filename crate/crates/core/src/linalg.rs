//! Dense matrices and the spectral quantities used by the conditioning
//! diagnostics: singular values, condition number and numerical rank.
//!
//! Singular values are computed with a Householder QR reduction followed by
//! one-sided (Hestenes) Jacobi on the triangular factor. The Gram product is
//! never formed on this path.

use std::fmt;

use crate::error::{KanError, Result};

/// Row-major dense matrix of finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(KanError::InvalidInput(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(KanError::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(KanError::InvalidInput("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(KanError::InvalidInput(format!(
                "shape mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    fn ensure_valid(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(KanError::InvalidInput("empty matrix".into()));
        }
        if !self.is_finite() {
            return Err(KanError::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Condition number, or the infinite flag on numerical rank deficiency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Condition {
    Finite(f64),
    Infinite,
}

impl Condition {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Condition::Infinite)
    }

    pub fn value(&self) -> f64 {
        match *self {
            Condition::Finite(k) => k,
            Condition::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Finite(k) => write!(f, "{k}"),
            Condition::Infinite => f.write_str("inf"),
        }
    }
}

/// Spectral summary of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSummary {
    /// All `min(rows, cols)` singular values, descending.
    pub singular_values: Vec<f64>,
    pub sigma_max: f64,
    /// Smallest computed singular value.
    pub sigma_min: f64,
    pub condition_number: Condition,
    pub numerical_rank: usize,
    /// `max(rows, cols) * sigma_max * f64::EPSILON`.
    pub tolerance: f64,
}

/// All `min(rows, cols)` singular values of `m`, in descending order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    m.ensure_valid()?;
    // Work on the tall orientation; singular values are transpose-invariant.
    let tall = if m.rows >= m.cols {
        m.clone()
    } else {
        m.transpose()
    };
    let r = householder_r(&tall);
    let mut sv = jacobi_column_norms(r);
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn spectrum_summary(m: &Matrix) -> Result<SpectrumSummary> {
    let singular_values = singular_values(m)?;
    let sigma_max = singular_values[0];
    let sigma_min = *singular_values.last().unwrap();
    let tolerance = m.rows.max(m.cols) as f64 * sigma_max * f64::EPSILON;
    let numerical_rank = singular_values.iter().filter(|&&s| s > tolerance).count();
    let condition_number = if numerical_rank == singular_values.len() {
        Condition::Finite(sigma_max / sigma_min)
    } else {
        Condition::Infinite
    };
    Ok(SpectrumSummary {
        singular_values,
        sigma_max,
        sigma_min,
        condition_number,
        numerical_rank,
        tolerance,
    })
}

/// The Gram product `mᵀm`.
pub fn gram(m: &Matrix) -> Result<Matrix> {
    m.ensure_valid()?;
    let n = m.cols;
    let mut g = Matrix::zeros(n, n);
    for r in 0..m.rows {
        let row = m.row(r);
        for i in 0..n {
            let a = row[i];
            if a == 0.0 {
                continue;
            }
            for j in i..n {
                g.data[i * n + j] += a * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            g.data[i * n + j] = g.data[j * n + i];
        }
    }
    Ok(g)
}

/// Upper-triangular factor R (cols x cols) of a Householder QR of a tall
/// matrix, stored column-major for the Jacobi stage.
fn householder_r(a: &Matrix) -> Vec<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    // Column-major copy.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    for k in 0..n.min(m) {
        let norm = cols[k][k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = v.iter().map(|x| x * x).sum::<f64>();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in cols.iter_mut().skip(k) {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        cols[k][k] = alpha;
        for x in cols[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
    }
    cols.into_iter().map(|c| c[..n].to_vec()).collect()
}

/// One-sided Jacobi: rotates column pairs until mutually orthogonal and
/// returns the column norms.
fn jacobi_column_norms(mut cols: Vec<Vec<f64>>) -> Vec<f64> {
    const MAX_SWEEPS: usize = 80;
    let n = cols.len();
    let tol = f64::EPSILON * (cols.first().map_or(1, Vec::len) as f64);
    let mut norms2: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = norms2[i];
                let beta = norms2[j];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (ci, cj) = pair_mut(&mut cols, i, j);
                let gamma: f64 = ci.iter().zip(cj.iter()).map(|(a, b)| a * b).sum();
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
                    let xi = *x;
                    let yi = *y;
                    *x = c * xi - s * yi;
                    *y = s * xi + c * yi;
                }
                norms2[i] = ci.iter().map(|x| x * x).sum();
                norms2[j] = cj.iter().map(|x| x * x).sum();
            }
        }
        if !rotated {
            break;
        }
    }
    norms2.into_iter().map(f64::sqrt).collect()
}

fn pair_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    debug_assert!(i < j);
    let (a, b) = v.split_at_mut(j);
    (&mut a[i], &mut b[0])
}
