//! Change of variables that turns a full diffusion matrix into the identity.
//!
//! With `Q = G Gᵀ` (lower Cholesky) and `x̄ = G⁻¹ x`, the dynamics become
//! `dx̄ = (Ā x̄ + ū) dt + dβ̄` with `Ā = G⁻¹ A G`, `ū = G⁻¹ u` and unit
//! diffusion, so the sine-transform predictor applies on an axis-aligned grid.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::grid::Estimate;
use crate::linalg;
use crate::models::{Flavor, InitialCondition, LtiDynamics, MeasurementModel};

/// The map `x = G x̄` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTransform {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
}

impl NoiseTransform {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        let g_inv = linalg::inverse(&g)?;
        Ok(Self { g, g_inv })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn to_transformed(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.g_inv * x
    }

    pub fn to_original(&self, x_bar: &DVector<f64>) -> DVector<f64> {
        &self.g * x_bar
    }

    /// `E[x] = G E[x̄]`, `cov[x] = G cov[x̄] Gᵀ`.
    pub fn estimate_to_original(&self, est: &Estimate) -> Estimate {
        let cov = &self.g * &est.cov * self.g.transpose();
        Estimate { mean: &self.g * &est.mean, cov: (&cov + cov.transpose()) * 0.5 }
    }

    pub fn initial_condition(&self, init: &InitialCondition) -> Result<InitialCondition> {
        let cov = &self.g_inv * &init.cov * self.g_inv.transpose();
        InitialCondition::new(&self.g_inv * &init.mean, (&cov + cov.transpose()) * 0.5)
    }
}

/// Returns the dynamics in `x̄ = G⁻¹ x` (unit diffusion) and the transform.
pub fn diagonalize_noise(dynamics: &LtiDynamics) -> Result<(LtiDynamics, NoiseTransform)> {
    let g = linalg::cholesky_lower(dynamics.noise())?;
    let t = NoiseTransform::new(g)?;
    let n = dynamics.dim();
    let a_bar = &t.g_inv * dynamics.matrix() * &t.g;
    let u_bar = &t.g_inv * dynamics.input();
    let eye = DMatrix::identity(n, n);
    let transformed = match dynamics.flavor() {
        Flavor::Continuous => LtiDynamics::continuous(a_bar, u_bar, eye, dynamics.sample_period())?,
        Flavor::Discrete => LtiDynamics::discrete(a_bar, u_bar, eye, dynamics.sample_period())?,
    };
    Ok((transformed, t))
}

/// A measurement model evaluated on transformed states: `p(z | G x̄)`.
#[derive(Debug, Clone)]
pub struct TransformedMeasurement<M> {
    pub inner: M,
    pub transform: NoiseTransform,
}

impl<M: MeasurementModel> MeasurementModel for TransformedMeasurement<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn likelihood(&self, z: f64, state: &[f64]) -> Result<f64> {
        let x = &self.transform.g * DVector::from_column_slice(state);
        self.inner.likelihood(z, x.as_slice())
    }

    fn likelihoods(&self, z: f64, states: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.inner.likelihoods(z, &(&self.transform.g * states))
    }
}
