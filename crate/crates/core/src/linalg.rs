//! Small dense linear-algebra helpers on top of `ndarray`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub const POWER_ITERATION_TOL: f64 = 1e-10;
pub const POWER_ITERATION_MAX_ITER: usize = 10_000;

/// Largest singular value of `matrix` by power iteration on `MᵀM`.
///
/// Stops when the relative change of the Rayleigh quotient drops below
/// `tol`. The start vector is a fixed non-constant pattern so that the
/// result is deterministic and not accidentally orthogonal to the dominant
/// singular vector of sign-alternating matrices.
pub fn spectral_norm_power(matrix: ArrayView2<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let (rows, cols) = matrix.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Domain("spectral norm of an empty matrix".into()));
    }
    let mut v = Array1::from_shape_fn(cols, |j| 1.0 + 0.5 * ((j + 1) as f64).sin());
    v /= norm2(v.view());
    let mut eig = 0.0;
    for iter in 1..=max_iter {
        let w = matrix.t().dot(&matrix.dot(&v));
        let w_norm = norm2(w.view());
        if w_norm == 0.0 {
            return Ok(0.0);
        }
        if !w_norm.is_finite() {
            return Err(Error::Numeric(format!(
                "power iteration produced a non-finite iterate at iteration {iter}"
            )));
        }
        let next = v.dot(&w);
        v = w / w_norm;
        if iter > 1 && (next - eig).abs() <= tol * next.abs() {
            return Ok(next.max(0.0).sqrt());
        }
        eig = next;
    }
    Err(Error::NotConverged {
        method: "power iteration",
        iterations: max_iter,
    })
}

pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn norm_inf(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn frobenius(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cholesky factor `L` (lower triangular, `A = L Lᵀ`) of a symmetric matrix.
/// Returns `None` when `A` is not numerically positive definite.
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn cholesky_solve(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}
