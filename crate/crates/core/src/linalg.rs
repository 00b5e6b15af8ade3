//! Dense row-major matrices and the handful of kernels the solvers need.
//!
//! Everything here is 64-bit, single-threaded and deterministic: the same
//! inputs always produce bit-identical outputs. Results are checked for
//! finiteness before they are handed back.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::LinalgError;

/// Relative singular-value cutoff used when callers have no opinion.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;
/// Largest 1-norm condition estimate [`inverse`] accepts by default.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

const JACOBI_MAX_SWEEPS: usize = 80;

/// Dense real matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting bad lengths and non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Length { rows, cols, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { op: "construct", index: pos });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::Ragged { row: i, expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    /// Builds a matrix from columns (each of length `rows`).
    pub fn from_cols<C: AsRef<[f64]>>(rows: usize, cols: &[C]) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != rows {
                return Err(LinalgError::Ragged { row: j, expected: rows, found: c.len() });
            }
            for (i, v) in c.iter().enumerate() {
                m.data[i * m.cols + j] = *v;
            }
        }
        checked("construct", m)
    }

    /// I.i.d. standard normal entries multiplied by `scale`.
    pub fn random_normal<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * scale
            })
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Panics on a non-finite value; use [`Matrix::from_vec`] for untrusted input.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(v.is_finite(), "non-finite matrix entry at ({i}, {j})");
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Columns `start..end` as a new matrix.
    pub fn col_range(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols, "column range {start}..{end} out of bounds");
        let mut m = Matrix::zeros(self.rows, end - start);
        for i in 0..self.rows {
            m.data[i * m.cols..(i + 1) * m.cols].copy_from_slice(&self.row(i)[start..end]);
        }
        m
    }

    /// Horizontal concatenation. All parts must share a row count.
    pub fn hcat(parts: &[Matrix]) -> Result<Matrix, LinalgError> {
        let Some(first) = parts.first() else {
            return Ok(Matrix::zeros(0, 0));
        };
        let rows = first.rows;
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(LinalgError::Shape { op: "hcat", left: first.shape(), right: bad.shape() });
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut m = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            for i in 0..rows {
                m.data[i * cols + offset..i * cols + offset + p.cols].copy_from_slice(p.row(i));
            }
            offset += p.cols;
        }
        Ok(m)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Result<Matrix, LinalgError> {
        let data = self.data.iter().map(|v| v * s).collect();
        checked("scale", Matrix { rows: self.rows, cols: self.cols, data })
    }

    /// Entrywise inner product `trace(self · otherᵀ)`.
    pub fn frobenius_dot(&self, other: &Matrix) -> Result<f64, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::Shape { op: "frobenius_dot", left: self.shape(), right: other.shape() });
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    /// Largest absolute entrywise difference; `INFINITY` when shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn zip_with(&self, op: &'static str, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::Shape { op, left: self.shape(), right: other.shape() });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        checked(op, Matrix { rows: self.rows, cols: self.cols, data })
    }
}

fn checked(op: &'static str, m: Matrix) -> Result<Matrix, LinalgError> {
    match m.data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(LinalgError::NonFinite { op, index }),
        None => Ok(m),
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::Shape { op: "matmul", left: a.shape(), right: b.shape() });
    }
    let (n, m) = (a.rows, b.cols);
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let out_row = &mut out.data[i * m..(i + 1) * m];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * m..(k + 1) * m];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
    checked("matmul", out)
}

/// Product of a chain of matrices, evaluated left to right.
pub fn matmul_chain(parts: &[&Matrix]) -> Result<Matrix, LinalgError> {
    let (first, rest) = parts.split_first().expect("matmul_chain needs at least one operand");
    rest.iter().try_fold((*first).clone(), |acc, m| matmul(&acc, m))
}

pub fn fro_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn one_norm(a: &Matrix) -> f64 {
    (0..a.cols)
        .map(|j| (0..a.rows).map(|i| a.get(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inverse with partial pivoting.
///
/// Fails when the 1-norm condition estimate `‖a‖₁·‖a⁻¹‖₁` exceeds `condition_cap`.
pub fn inverse(a: &Matrix, condition_cap: f64) -> Result<Matrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
    }
    let n = a.rows;
    let mut work = a.clone();
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&p, &q| work.get(p, col).abs().total_cmp(&work.get(q, col).abs()))
            .expect("non-empty pivot range");
        let pivot = work.get(pivot_row, col);
        if pivot == 0.0 {
            return Err(LinalgError::Singular { estimate: f64::INFINITY });
        }
        if pivot_row != col {
            swap_rows(&mut work, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let scale = 1.0 / pivot;
        for j in 0..n {
            work.data[col * n + j] *= scale;
            inv.data[col * n + j] *= scale;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work.data[r * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                work.data[r * n + j] -= factor * work.data[col * n + j];
                inv.data[r * n + j] -= factor * inv.data[col * n + j];
            }
        }
    }
    if inv.data.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::Singular { estimate: f64::INFINITY });
    }
    let estimate = one_norm(a) * one_norm(&inv);
    if !(estimate <= condition_cap) {
        return Err(LinalgError::Singular { estimate });
    }
    Ok(inv)
}

fn swap_rows(m: &mut Matrix, p: usize, q: usize) {
    let c = m.cols;
    for j in 0..c {
        m.data.swap(p * c + j, q * c + j);
    }
}

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`.
///
/// `u` is `rows × k`, `v` is `cols × k` with `k = min(rows, cols)`; `s` is
/// sorted in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// One-sided Jacobi SVD. Accurate to roughly machine precision relative to
/// the largest singular value, and fully deterministic.
pub fn svd(a: &Matrix) -> Svd {
    if a.rows < a.cols {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let (m, n) = a.shape();
    // columns of the working copy, rotated until mutually orthogonal
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        for i in 0..m {
            u.data[i * n + k] = if sigma > 0.0 { cols[j][i] / sigma } else { 0.0 };
        }
        for i in 0..n {
            v.data[i * n + k] = vcols[j][i];
        }
    }
    Svd { u, s, v }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

pub fn singular_values(a: &Matrix) -> Vec<f64> {
    svd(a).s
}

/// Numerical rank: singular values strictly above `tol × σ_max`.
pub fn rank(a: &Matrix, tol: f64) -> usize {
    let s = singular_values(a);
    let cutoff = tol * s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&v| v > cutoff && v > 0.0).count()
}

/// Moore-Penrose pseudoinverse via SVD; singular values at or below
/// `tol × σ_max` are treated as zero.
pub fn pseudoinverse(a: &Matrix, tol: f64) -> Matrix {
    let Svd { u, s, v } = svd(a);
    let (m, n) = a.shape();
    let mut out = Matrix::zeros(n, m);
    let cutoff = tol * s.first().copied().unwrap_or(0.0);
    for (k, &sigma) in s.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        let inv = 1.0 / sigma;
        for i in 0..n {
            let vik = v.get(i, k) * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..m {
                out.data[i * m + j] += vik * u.get(j, k);
            }
        }
    }
    out
}

/// Column-wise softmax with per-column max subtraction.
pub fn col_softmax(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for j in 0..a.cols {
        let max = (0..a.rows).map(|i| a.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for i in 0..a.rows {
            let e = (a.get(i, j) - max).exp();
            out.data[i * a.cols + j] = e;
            sum += e;
        }
        for i in 0..a.rows {
            out.data[i * a.cols + j] /= sum;
        }
    }
    out
}
