//! Small dense linear-algebra helpers over `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Build a matrix from row vectors, checking it is square of size `m`.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = rows.len();
    if m == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    for row in rows {
        crate::error::check_len("matrix row", m, row.len())?;
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(m.clone()).eigenvalues
}

pub fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).min()
}

/// Ratio of largest to smallest eigenvalue of a symmetric PSD matrix.
/// Returns `+inf` when the smallest eigenvalue is not positive relative to
/// the largest (including the all-zero matrix).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = symmetric_eigenvalues(m);
    let hi = ev.max();
    let lo = ev.min();
    if hi <= 0.0 || lo <= hi * f64::EPSILON * m.nrows() as f64 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve `a x = b` for symmetric positive-definite `a` via Cholesky.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = Cholesky::new(a.clone()).ok_or_else(|| {
        Error::Singular(format!(
            "matrix is not numerically positive definite (smallest eigenvalue {:e})",
            smallest_eigenvalue(a)
        ))
    })?;
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("solution is not finite".into()));
    }
    Ok(x)
}

/// Symmetric square root `S` with `S S = a`, for PSD `a`. Negative
/// eigenvalues from round-off are clamped to zero.
pub fn symmetric_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Symmetric inverse square root of an SPD matrix.
pub fn symmetric_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let lo = eig.eigenvalues.min();
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            smallest_eigenvalue: lo,
        });
    }
    let d = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}
