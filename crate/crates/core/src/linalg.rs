//! Dense symmetric solves used by the regression and sampling code.
//!
//! Matrices are row-major `Vec<T>` with an explicit dimension.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower Cholesky factor of a symmetric positive-definite `n×n` matrix.
pub fn cholesky<T: Real>(a: &[T], n: usize) -> Result<Vec<T>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return Err(Error::Singular(format!("pivot {j} is {diag}")));
        }
        let d = diag.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the lower factor.
pub fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Cholesky of `a + jitter·I`, trying no jitter first and then escalating
/// by decades from `1e-10` up to `max_jitter`. Returns the factor and the
/// jitter that succeeded.
pub fn cholesky_jittered<T: Real>(a: &[T], n: usize, max_jitter: T) -> Result<(Vec<T>, T)> {
    let mut jitter = T::zero();
    loop {
        let mut m = a.to_vec();
        for i in 0..n {
            m[i * n + i] += jitter;
        }
        match cholesky(&m, n) {
            Ok(l) => return Ok((l, jitter)),
            Err(e) if jitter >= max_jitter => return Err(e),
            Err(_) => {
                jitter = if jitter == T::zero() {
                    T::lit(1e-10).min(max_jitter)
                } else {
                    (jitter * T::lit(10.0)).min(max_jitter)
                };
            }
        }
    }
}

/// Least squares `min ‖X β − y‖²` through the normal equations with a
/// diagonal ridge term. `x` is `rows×cols` row-major; `y` holds `k` target
/// columns stored as `rows×k` row-major. Returns `cols×k` coefficients.
pub fn ridge_normal_equations<T: Real>(
    x: &[T],
    rows: usize,
    cols: usize,
    y: &[T],
    k: usize,
    ridge: T,
) -> Result<Vec<T>> {
    let mut xtx = vec![T::zero(); cols * cols];
    let mut xty = vec![T::zero(); cols * k];
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let yr = &y[r * k..(r + 1) * k];
        for a in 0..cols {
            for b in 0..=a {
                xtx[a * cols + b] += xr[a] * xr[b];
            }
            for j in 0..k {
                xty[a * k + j] += xr[a] * yr[j];
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            xtx[b * cols + a] = xtx[a * cols + b];
        }
        xtx[a * cols + a] += ridge;
    }
    let l = cholesky(&xtx, cols)?;
    let mut out = vec![T::zero(); cols * k];
    let mut rhs = vec![T::zero(); cols];
    for j in 0..k {
        for a in 0..cols {
            rhs[a] = xty[a * k + j];
        }
        let sol = cholesky_solve(&l, cols, &rhs);
        for a in 0..cols {
            out[a * k + j] = sol[a];
        }
    }
    Ok(out)
}

pub fn mat_vec<T: Real>(a: &[T], n: usize, x: &[T]) -> Vec<T> {
    (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().zip(x).map(|(&p, &q)| p * q).sum())
        .collect()
}
