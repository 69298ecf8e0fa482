//! Small dense linear-algebra helpers shared by the operator and solver modules.

use nalgebra::{DMatrix, DVector, Schur};

use crate::{Error, Result};

/// Operators up to this dimension get a dense eigensolve; larger ones fall
/// back to power iteration.
pub const DENSE_EIG_MAX_DIM: usize = 4096;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_hermitian(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    hermitian_part(m).symmetric_eigenvalues().min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    hermitian_part(m).symmetric_eigenvalues().max()
}

/// Positive semidefinite up to `tol` relative to the matrix magnitude.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol * m.amax().max(1.0)
}

/// Positive definite: smallest eigenvalue strictly above `tol` (absolute).
pub fn is_pd(m: &DMatrix<f64>, tol: f64) -> bool {
    !m.is_empty() && min_eigenvalue(m) > tol
}

/// Spectral condition number of a symmetric positive definite matrix;
/// infinite when it is not positive definite.
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let eig = hermitian_part(m).symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Principal square root of a positive semidefinite matrix.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = hermitian_part(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Largest modulus among the eigenvalues of a square matrix.
///
/// Dense Schur decomposition up to [`DENSE_EIG_MAX_DIM`], power iteration above
/// (or when the QR sweep fails to converge).
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::dims(format!(
            "spectral radius of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    if n == 1 {
        return Ok(m[(0, 0)].abs());
    }
    if n <= DENSE_EIG_MAX_DIM {
        if let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, 200 * n) {
            let rho = schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            return Ok(rho);
        }
        log::warn!("Schur sweep did not converge for a {n}x{n} matrix; using power iteration");
    }
    power_iteration_radius(m)
}

/// Spectral radius by power iteration on `m`.
///
/// The growth rate is read off two consecutive steps (`sqrt(|M²v| / |v|)`),
/// which also settles for a dominant pair `±λ`.
pub fn power_iteration_radius(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    // Deterministic start with no special alignment to any eigenvector.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    v /= v.norm();
    let mut last = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let w = m * &v;
        let w2 = m * &w;
        let norm = w2.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let estimate = norm.sqrt();
        v = w2 / norm;
        if (estimate - last).abs() <= POWER_TOL * estimate.max(1e-300) {
            return Ok(estimate);
        }
        last = estimate;
    }
    Err(Error::ConvergenceFailure(format!(
        "power iteration stagnated at radius estimate {last}"
    )))
}

/// Largest absolute entry of `a - b`, relative to `max(1, |a|, |b|)`.
pub fn rel_max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1.0);
    (a - b).amax() / scale
}

/// Inverse of a symmetric positive definite matrix, `None` when the Cholesky
/// factorization fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    hermitian_part(m).cholesky().map(|c| c.inverse())
}

/// Block matrix `[[a, b], [c, d]]`.
pub fn block2x2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut out = DMatrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

/// Observability matrix `[l; l a; ...; l a^{n-1}]`.
pub fn observability_matrix(a: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let p = l.nrows();
    let mut out = DMatrix::zeros(n * p, n);
    let mut row = l.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&row);
        row = &row * a;
    }
    out
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let tol = svd.singular_values.max() * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON * 10.0;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_of_rotation_and_jordan() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 0.9).abs() < 1e-12);
        let jordan = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        assert!((spectral_radius(&jordan).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_agrees_with_schur() {
        let m = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.1, 0.3, 0.1, 0.4, 0.2, 0.2, 0.3]);
        let dense = spectral_radius(&m).unwrap();
        let power = power_iteration_radius(&m).unwrap();
        assert!((dense - power).abs() < 1e-8, "{dense} vs {power}");
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_sqrt(&m);
        assert!((&r * &r - &m).amax() < 1e-12);
    }

    #[test]
    fn observability_rank() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let l = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(rank(&observability_matrix(&a, &l)), 2);
        let l2 = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(rank(&observability_matrix(&a, &l2)), 1);
    }
}
