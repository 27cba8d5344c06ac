//! Spectral diagnostics for reservoir matrices.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Matrices up to this order are handled by a dense Schur decomposition.
pub const DENSE_LIMIT: usize = 600;

const DENSE_EPS: f64 = 1e-15;

fn dense_budget(n: usize) -> usize {
    100 * n.max(10)
}

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 10_000;

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let budget = dense_budget(m.nrows());
    let schur = Schur::try_new(m.clone(), DENSE_EPS, budget)
        .ok_or(Error::NoConvergence { iterations: budget })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus.
///
/// Dense eigendecomposition for `n <= DENSE_LIMIT`; beyond that the
/// iterative estimator runs first and the dense route is the fallback.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    check_finite(m)?;
    if m.nrows() > DENSE_LIMIT {
        match spectral_radius_iterative(m, POWER_TOL, POWER_MAX_ITER) {
            Ok(rho) => return Ok(rho),
            Err(Error::NoConvergence { .. }) => {
                log::warn!("event=power_iteration_fallback n={}", m.nrows());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Power iteration generalized to a two-dimensional Krylov window.
///
/// Each step fits `A²v ≈ p·Av + q·v` by least squares; the roots of
/// `z² − p z − q` approximate the dominant eigenvalue or the dominant
/// complex-conjugate pair, which plain power iteration cannot resolve.
pub fn spectral_radius_iterative(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let mut prev = f64::NAN;
    let mut stable = 0;
    for _ in 0..max_iter {
        let v1 = m * &v;
        let v1_norm = v1.norm();
        if v1_norm == 0.0 {
            // v in the null space; nilpotent-like behaviour on this start vector
            return Ok(0.0);
        }
        let v2 = m * &v1;
        let (g11, g12, g22) = (v1.dot(&v1), v1.dot(&v), v.dot(&v));
        let (r1, r2) = (v1.dot(&v2), v.dot(&v2));
        let det = g11 * g22 - g12 * g12;
        let estimate;
        let residual;
        if det.abs() <= 1e-14 * g11 * g22 {
            // v and Av are parallel: a single real dominant eigenvalue
            let mu = r1 / g11;
            estimate = mu.abs();
            residual = (&v2 - &v1 * mu).norm() / v2.norm().max(f64::MIN_POSITIVE);
        } else {
            let p = (r1 * g22 - r2 * g12) / det;
            let q = (g11 * r2 - g12 * r1) / det;
            let disc = p * p + 4.0 * q;
            estimate = if disc >= 0.0 {
                let s = disc.sqrt();
                ((p + s) / 2.0).abs().max(((p - s) / 2.0).abs())
            } else {
                (-q).sqrt()
            };
            residual = (&v2 - &v1 * p - &v * q).norm() / v2.norm().max(f64::MIN_POSITIVE);
        }
        if (estimate - prev).abs() <= tol * estimate.max(1.0) && residual <= tol.sqrt() {
            stable += 1;
            if stable >= 3 {
                return Ok(estimate);
            }
        } else {
            stable = 0;
        }
        prev = estimate;
        v = v1 / v1_norm;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
    })
}

/// Largest singular value, `sqrt(ρ(MᵀM))`.
pub fn largest_singular_value(m: &DMatrix<f64>) -> Result<f64> {
    check_finite(m)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let budget = dense_budget(m.nrows().max(m.ncols()));
    let svd = SVD::try_new(m.clone(), false, false, DENSE_EPS, budget)
        .ok_or(Error::NoConvergence { iterations: budget })?;
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBreakdown(
            "matrix has non-finite entries".into(),
        ))
    }
}
