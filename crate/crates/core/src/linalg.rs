//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Condition numbers above this are treated as singular.
pub const CONDITION_CAP: f64 = 1e12;

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// 2-norm condition number (infinite for singular or empty-rank matrices).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Numerical rank: singular values above `tol * max(1, σ_max)`.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    let s = singular_values(a);
    let scale = s.first().copied().unwrap_or(0.0).max(1.0);
    s.iter().filter(|&&v| v > tol * scale).count()
}

/// Inverse with a conditioning guard.
pub fn inverse(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let cond = condition_number(a);
    if !(cond <= CONDITION_CAP) {
        return Err(Error::Singular { context: context.to_string(), condition: cond });
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular { context: context.to_string(), condition: cond })
}

/// Solves `A x = b` by LU after a conditioning check.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let cond = condition_number(a);
    if !(cond <= CONDITION_CAP) {
        return Err(Error::Singular { context: context.to_string(), condition: cond });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular { context: context.to_string(), condition: cond })
}

/// Moore-Penrose pseudo-inverse.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let s = singular_values(a);
    let eps = s.first().copied().unwrap_or(0.0) * 1e-13;
    a.clone()
        .svd(true, true)
        .pseudo_inverse(eps)
        .expect("svd computed with both factors")
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

/// Complex eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

/// Unit vector spanning (numerically) the kernel of `A − μI`.
pub fn eigenvector(a: &DMatrix<f64>, mu: Complex64) -> DVector<Complex64> {
    let n = a.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { mu } else { Complex64::new(0.0, 0.0) };
        Complex64::new(a[(i, j)], 0.0) - d
    });
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    vt.row(imin).adjoint()
}

/// `|det(A − μI)|` relative to `max(1, ‖A‖)^n`.
pub fn char_poly_residual(a: &DMatrix<f64>, mu: Complex64) -> f64 {
    let n = a.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { mu } else { Complex64::new(0.0, 0.0) };
        Complex64::new(a[(i, j)], 0.0) - d
    });
    let scale = a.norm().max(1.0).powi(n as i32);
    shifted.determinant().norm() / scale
}

/// Orthonormal basis of the orthogonal complement of the row vector `v`
/// (returned as columns).
pub fn orthogonal_complement(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    if n <= 1 {
        return DMatrix::zeros(n, 0);
    }
    // Householder QR of [v | I]: the first column of Q is ±v/|v| and the
    // remaining columns complete it to an orthonormal basis.
    let mut m = DMatrix::zeros(n, n + 1);
    m.set_column(0, &(v / v.norm()));
    for i in 0..n {
        m[(i, i + 1)] = 1.0;
    }
    let q = m.qr().q();
    q.columns(1, n - 1).into_owned()
}

pub fn matrix_power(a: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..l {
        out = &out * a;
    }
    out
}
