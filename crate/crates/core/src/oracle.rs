//! Reference solvers that reach the same answers as [`crate::solvers`] by
//! unrelated routes. They work on plain scalar loops, never touch the
//! inverse or pseudoinverse kernels, and are meant for tests at small sizes.

use crate::error::SolveError;
use crate::linalg::Matrix;

/// Solves `min ‖W − W_o‖²_F s.t. WX = W_oY` through its KKT system.
///
/// Unknowns are the `m·d` entries of `W` followed by the `m·N` multipliers.
/// Stationarity rows read `2(W − W_o)_{rc} + Σ_j Λ_{rj} X_{cj} = 0`, and
/// constraint rows read `Σ_c W_{rc} X_{cj} = (W_oY)_{rj}`. The system is
/// singular exactly when `X` lacks full column rank, in which case the oracle
/// declines.
pub fn qp_oracle(w_o: &Matrix, x: &Matrix, y: &Matrix) -> Result<Matrix, SolveError> {
    let (m, d) = w_o.shape();
    let n = x.cols();
    if x.rows() != d || y.shape() != x.shape() {
        return Err(SolveError::OracleDeclined(format!(
            "shapes W_o {m}x{d}, X {}x{}, Y {}x{} are not conformable",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let size = m * (d + n);
    if size > 20_000 {
        return Err(SolveError::OracleDeclined(format!("system of size {size} is too large")));
    }

    let w_idx = |r: usize, c: usize| r * d + c;
    let l_idx = |r: usize, j: usize| m * d + r * n + j;
    let mut a = vec![vec![0.0; size]; size];
    let mut b = vec![0.0; size];

    for r in 0..m {
        for c in 0..d {
            let row = w_idx(r, c);
            a[row][w_idx(r, c)] = 2.0;
            for j in 0..n {
                a[row][l_idx(r, j)] = x.get(c, j);
            }
            b[row] = 2.0 * w_o.get(r, c);
        }
        for j in 0..n {
            let row = l_idx(r, j);
            for c in 0..d {
                a[row][w_idx(r, c)] = x.get(c, j);
            }
            let mut target = 0.0;
            for k in 0..d {
                target += w_o.get(r, k) * y.get(k, j);
            }
            b[row] = target;
        }
    }

    let sol = gaussian_solve(a, b)
        .ok_or_else(|| SolveError::OracleDeclined("KKT system is singular (X is not full column rank)".into()))?;
    let mut w = Matrix::zeros(m, d);
    for r in 0..m {
        for c in 0..d {
            w.set(r, c, sol[w_idx(r, c)]);
        }
    }
    Ok(w)
}

/// Gaussian elimination with partial pivoting; `None` when a pivot collapses
/// below `1e-12` of the largest entry.
fn gaussian_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return if n == 0 { Some(Vec::new()) } else { None };
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(piv, col);
        b.swap(piv, col);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect())
        .collect()
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(p, q)| p * q).sum()
}

/// Minimizes `‖WX − W_oY‖²_F + ‖W − W_o‖²_F` by conjugate gradients from
/// `W_o`, stopping once the gradient norm falls below `grad_tol`.
///
/// Returns the minimizer and the number of iterations taken.
pub fn uce_numeric_minimizer(w_o: &Matrix, x: &Matrix, y: &Matrix, grad_tol: f64) -> (Matrix, usize) {
    let (m, d) = w_o.shape();
    let n = x.cols();
    let wo = w_o.to_rows();
    let xr = x.to_rows();
    let yr = y.to_rows();
    let xt: Vec<Vec<f64>> = (0..n).map(|j| (0..d).map(|i| xr[i][j]).collect()).collect();
    let gram = mul(&xr, &xt);

    // Hessian action up to the factor 2: D ↦ D(XXᵀ + I)
    let hess = |dm: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = mul(dm, &gram);
        for (o, r) in out.iter_mut().zip(dm) {
            for (v, dv) in o.iter_mut().zip(r) {
                *v += dv;
            }
        }
        out
    };
    // minimizer solves W(XXᵀ + I) = W_oYXᵀ + W_o
    let mut rhs = mul(&mul(&wo, &yr), &xt);
    for (o, r) in rhs.iter_mut().zip(&wo) {
        for (v, w) in o.iter_mut().zip(r) {
            *v += w;
        }
    }

    let mut w = wo.clone();
    let hw = hess(&w);
    let mut res: Vec<Vec<f64>> = rhs.iter().zip(&hw).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()).collect();
    let mut dir = res.clone();
    let mut rr = dot(&res, &res);
    let max_iter = 4 * m * d + 10;
    let mut iters = 0;
    while 2.0 * rr.sqrt() > grad_tol && iters < max_iter {
        let hd = hess(&dir);
        let alpha = rr / dot(&dir, &hd);
        for i in 0..m {
            for j in 0..d {
                w[i][j] += alpha * dir[i][j];
                res[i][j] -= alpha * hd[i][j];
            }
        }
        let rr_new = dot(&res, &res);
        let beta = rr_new / rr;
        for i in 0..m {
            for j in 0..d {
                dir[i][j] = res[i][j] + beta * dir[i][j];
            }
        }
        rr = rr_new;
        iters += 1;
    }
    (Matrix::from_rows(&w).expect("finite iterate"), iters)
}
