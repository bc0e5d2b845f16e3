//! Small dense linear-algebra helpers shared by the fpca, design and
//! estimator modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Trapezoid quadrature weights for an ascending grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for j in 1..n {
        let h = grid[j] - grid[j - 1];
        w[j - 1] += 0.5 * h;
        w[j] += 0.5 * h;
    }
    w
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let inv = chol.inverse();
    Some(symmetrize(&inv))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric PSD matrix after flooring its eigenvalues at
/// `rel_floor * trace`. Fails when the trace itself is not positive.
pub fn floored_inverse(m: &DMatrix<f64>, rel_floor: f64) -> Result<DMatrix<f64>> {
    let trace = m.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::SingularCovariance(format!("trace {trace} is not positive")));
    }
    let floor = rel_floor * trace;
    let eig = symmetrize(m).symmetric_eigen();
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v.max(floor));
    let u = &eig.eigenvectors;
    let inv = u * DMatrix::from_diagonal(&inv_vals) * u.transpose();
    Ok(symmetrize(&inv))
}

/// Log-density of N(mean, cov) at `x`, via Cholesky. `None` when `cov` is
/// not positive definite.
pub fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Option<f64> {
    let n = x.len() as f64;
    let chol = cov.clone().cholesky()?;
    let l = chol.l();
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let r = x - mean;
    let z = chol.solve(&r);
    let quad = r.dot(&z);
    Some(-0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + quad))
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clamped to 0).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let u = &eig.eigenvectors;
    u * DMatrix::from_diagonal(&vals) * u.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_uniform() {
        let w = trapezoid_weights(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(w, vec![0.5, 1.0, 1.0, 0.5]);
        assert!(trapezoid_weights(&[2.0]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn floored_inverse_matches_plain_inverse_when_well_conditioned() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = floored_inverse(&m, 1e-12).unwrap();
        let b = spd_inverse(&m).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn floored_inverse_rejects_zero_matrix() {
        let m = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(floored_inverse(&m, 1e-12), Err(Error::SingularCovariance(_))));
    }

    #[test]
    fn logpdf_standard_normal() {
        let x = DVector::from_vec(vec![0.0]);
        let v = gaussian_logpdf(&x, &x, &DMatrix::identity(1, 1)).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }
}
