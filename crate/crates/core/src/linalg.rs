//! Small dense linear-algebra helpers shared by the filters.

use alloc::format;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, DVectorView};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};

/// Relative tolerance used when checking a matrix for symmetry.
const SYMMETRY_TOL: f64 = 1e-9;

/// Returns the lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_symmetric(m)?;
    m.clone().cholesky().map(|c| c.l()).ok_or_else(|| Error::NotPositiveDefinite(format!("{m}")))
}

pub fn require_square(m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: m.nrows() });
    }
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: m.ncols() });
    }
    Ok(())
}

pub fn require_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if !(asym <= SYMMETRY_TOL * scale) {
        return Err(Error::NotPositiveDefinite(format!("asymmetry {asym:e}")));
    }
    Ok(())
}

/// A factor `L` with `L Lᵀ = m` for a symmetric positive semi-definite `m`.
///
/// Falls back to an eigen-decomposition when Cholesky fails, so zero or
/// rank-deficient covariances can still be sampled.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_symmetric(m)?;
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut sqrt_vals = eig.eigenvalues.clone();
    for v in sqrt_vals.iter_mut() {
        if *v < -1e-9 * scale {
            return Err(Error::NotPositiveDefinite(format!("negative eigenvalue {v:e}")));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

/// Matrix exponential `exp(m)` by scaling and squaring with a degree-8
/// diagonal Padé approximant.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    const Q: usize = 8;
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    if m.iter().all(|&v| v == 0.0) {
        return eye;
    }
    // scale so the 1-norm is at most 1/2
    let norm = m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = m * scale;
    let mut c = 1.0;
    let mut power = eye.clone();
    let mut num = eye.clone();
    let mut den = eye;
    for k in 1..=Q {
        c *= (Q - k + 1) as f64 / (k * (2 * Q - k + 1)) as f64;
        power = &power * &x;
        num += &power * c;
        if k % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut e = den.lu().solve(&num).expect("Padé denominator is invertible for a scaled argument");
    for _ in 0..squarings {
        e = &e * &e;
    }
    e
}

pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let det = m.clone().lu().determinant();
    if !det.is_finite() || det == 0.0 {
        return Err(Error::SingularDynamics);
    }
    m.clone().try_inverse().ok_or(Error::SingularDynamics)
}

/// Discrete equivalent of `dx = (A x + u) dt + dβ`, `E[dβ dβᵀ] = Q dt`,
/// over a period `ts`: returns `(exp(A ts), ∫ exp(A s) u ds, ∫ exp(A s) Q exp(A s)ᵀ ds)`.
pub fn van_loan(
    a: &DMatrix<f64>,
    u: &DVector<f64>,
    q: &DMatrix<f64>,
    ts: f64,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();

    // Input: exp([[A, u], [0, 0]] ts) = [[Φ, Γu], [0, 1]].
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    aug.view_mut((0, n), (n, 1)).copy_from(&(u * ts));
    let e = expm(&aug);
    let phi = e.view((0, 0), (n, n)).into_owned();
    let input = e.view((0, n), (n, 1)).column(0).into_owned();

    // Noise: exp([[-A, Q], [0, Aᵀ]] ts) = [[., Φ⁻¹ Qd], [0, Φᵀ]].
    let mut blk = DMatrix::zeros(2 * n, 2 * n);
    blk.view_mut((0, 0), (n, n)).copy_from(&(-a * ts));
    blk.view_mut((0, n), (n, n)).copy_from(&(q * ts));
    blk.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * ts));
    let e = expm(&blk);
    let phi_t = e.view((n, n), (n, n)).into_owned();
    let upper = e.view((0, n), (n, n)).into_owned();
    let qd = phi_t.transpose() * upper;
    let qd = (&qd + qd.transpose()) * 0.5;

    (phi, input, qd)
}

/// Multivariate normal density with a fixed covariance, evaluated on
/// deviations from the mean.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    precision: DMatrix<f64>,
    norm: f64,
}

impl GaussianDensity {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let l = cholesky_lower(cov)?;
        let n = cov.nrows();
        let det_sqrt: f64 = l.diagonal().iter().product();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::NotPositiveDefinite(format!("{cov}")))?;
        let precision = l_inv.transpose() * l_inv;
        let norm = 1.0 / ((2.0 * PI).powf(n as f64 / 2.0) * det_sqrt);
        Ok(Self { precision, norm })
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Peak value `(2π)^(-n/2) |Σ|^(-1/2)`.
    pub fn peak(&self) -> f64 {
        self.norm
    }

    pub fn density(&self, deviation: DVectorView<'_, f64>) -> f64 {
        self.norm * (-0.5 * self.mahalanobis_sq(deviation.as_slice())).exp()
    }

    /// Density for a deviation given as a plain slice.
    #[inline]
    pub fn density_slice(&self, deviation: &[f64]) -> f64 {
        self.norm * (-0.5 * self.mahalanobis_sq(deviation)).exp()
    }

    #[inline]
    pub fn mahalanobis_sq(&self, d: &[f64]) -> f64 {
        let n = d.len();
        let mut acc = 0.0;
        for j in 0..n {
            let mut row = 0.0;
            for i in 0..n {
                row += self.precision[(i, j)] * d[i];
            }
            acc += row * d[j];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_of_two_by_two() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let g = cholesky_lower(&q).unwrap();
        assert_relative_eq!(g[(0, 0)], 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(g[(1, 0)], 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(g[(1, 1)], 1.5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_lower(&q), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn psd_factor_handles_zero() {
        let l = psd_factor(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(l.amax(), 0.0);
    }

    #[test]
    fn gaussian_peak_matches_closed_form() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![100.0, 100.0]));
        let g = GaussianDensity::new(&cov).unwrap();
        assert_relative_eq!(g.peak(), 1.0 / (2.0 * PI * 100.0), max_relative = 1e-14);
        let d = DVector::from_vec(alloc::vec![10.0, 0.0]);
        assert_relative_eq!(g.density(d.as_view()), g.peak() * (-0.5f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn expm_closed_forms() {
        let d = expm(&DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![1.0, -2.0, 0.5])));
        assert_relative_eq!(d[(0, 0)], 1f64.exp(), max_relative = 1e-14);
        assert_relative_eq!(d[(1, 1)], (-2f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(d[(2, 2)], 0.5f64.exp(), max_relative = 1e-14);
        // rotation generator
        let w = 2.7;
        let r = expm(&DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]));
        let expected = DMatrix::from_row_slice(2, 2, &[w.cos(), -w.sin(), w.sin(), w.cos()]);
        assert_relative_eq!(r, expected, epsilon = 1e-13);
        // large norm and a nilpotent part
        let j = expm(&DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 3.0]));
        let e3 = 3f64.exp();
        assert_relative_eq!(j, DMatrix::from_row_slice(2, 2, &[e3, e3, 0.0, e3]), max_relative = 1e-13);
    }

    #[test]
    fn expm_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[0.3, -1.2, 0.4, 2.0, -0.1, 0.7, -0.5, 0.9, 0.2]);
        let p = expm(&a) * expm(&(-&a));
        assert_relative_eq!(p, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn van_loan_random_walk_is_trivial() {
        let a = DMatrix::zeros(2, 2);
        let u = DVector::from_vec(alloc::vec![50.0, 50.0]);
        let q = DMatrix::from_diagonal_element(2, 2, 100.0);
        let (phi, ud, qd) = van_loan(&a, &u, &q, 1.0);
        assert_relative_eq!(phi, DMatrix::identity(2, 2), epsilon = 1e-14);
        assert_relative_eq!(ud, u, epsilon = 1e-12);
        assert_relative_eq!(qd, q, epsilon = 1e-10);
    }

    #[test]
    fn van_loan_integrated_velocity() {
        // x = [p, v], dp = v dt, dv = dβ with intensity q.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
        let t = 0.7;
        let (phi, _, qd) = van_loan(&a, &DVector::zeros(2), &q, t);
        assert_relative_eq!(phi, DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]), epsilon = 1e-14);
        let expected =
            DMatrix::from_row_slice(2, 2, &[2.0 * t * t * t / 3.0, 2.0 * t * t / 2.0, 2.0 * t * t / 2.0, 2.0 * t]);
        assert_relative_eq!(qd, expected, epsilon = 1e-12);
    }
}
