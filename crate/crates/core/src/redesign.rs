//! Moment-based placement of the grid before each prediction.
//!
//! The filtering moments are pushed through the linear prediction to get a
//! box of `±sigma_mult` predictive standard deviations. Its corners are
//! mapped back through the dynamics, and the filtering density is transferred
//! onto the smallest axis-aligned grid enclosing them, so that after the grid
//! moves it covers the predictive box.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{Estimate, Grid, PointMassDensity};
use crate::linalg;
use crate::models::DiscreteModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedesignConfig {
    pub sigma_mult: f64,
}

impl RedesignConfig {
    pub fn new(sigma_mult: f64) -> Result<Self> {
        if !(sigma_mult > 0.0 && sigma_mult.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_mult must be positive, got {sigma_mult}")));
        }
        Ok(Self { sigma_mult })
    }
}

impl Default for RedesignConfig {
    fn default() -> Self {
        Self { sigma_mult: 4.0 }
    }
}

/// Predictive moments `F x + u`, `F P Fᵀ + Q` from the density's own moments.
pub fn predict_moments(pmd: &PointMassDensity, model: &DiscreteModel) -> Result<Estimate> {
    let est = pmd.moments()?;
    Ok(kalman_predict(&est, model))
}

pub fn kalman_predict(est: &Estimate, model: &DiscreteModel) -> Estimate {
    let f = &model.transition;
    let mean = f * &est.mean + &model.input;
    let cov = f * &est.cov * f.transpose() + &model.noise;
    let cov = (&cov + cov.transpose()) * 0.5;
    Estimate { mean, cov }
}

/// Corners of the predictive box mapped back through `x ↦ F⁻¹(x − u)`.
pub fn back_transformed_corners(
    predicted: &Estimate,
    model: &DiscreteModel,
    sigma_mult: f64,
) -> Result<Vec<DVector<f64>>> {
    let n = predicted.mean.len();
    let f_inv = linalg::inverse(&model.transition)?;
    let half: Vec<f64> = (0..n).map(|i| sigma_mult * predicted.cov[(i, i)].max(0.0).sqrt()).collect();
    Ok((0..1usize << n)
        .map(|mask| {
            let c = DVector::from_fn(n, |i, _| {
                let s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                predicted.mean[i] + s * half[i] - model.input[i]
            });
            &f_inv * c
        })
        .collect())
}

/// Axis-aligned grid with `counts` points circumscribing `corners`.
pub fn bounding_grid(corners: &[DVector<f64>], counts: &[usize]) -> Result<Grid> {
    let n = counts.len();
    let mut lo = DVector::from_element(n, f64::INFINITY);
    let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
    for c in corners {
        for i in 0..n {
            lo[i] = lo[i].min(c[i]);
            hi[i] = hi[i].max(c[i]);
        }
    }
    let center = (&lo + &hi) * 0.5;
    let steps = (0..n)
        .map(|i| {
            let span = hi[i] - lo[i];
            if counts[i] > 1 { span / (counts[i] - 1) as f64 } else { span.max(f64::MIN_POSITIVE) }
        })
        .collect();
    Grid::axis_aligned(center, steps, counts.to_vec())
}

/// Transfers the filtering density onto the redesigned grid.
pub fn redesign(pmd: &PointMassDensity, model: &DiscreteModel, cfg: &RedesignConfig) -> Result<PointMassDensity> {
    let predicted = predict_moments(pmd, model)?;
    let corners = back_transformed_corners(&predicted, model, cfg.sigma_mult)?;
    let grid = bounding_grid(&corners, pmd.grid().counts())?;
    pmd.interpolate(&grid)
}
