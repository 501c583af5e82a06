//! The efficient point-mass filter.
//!
//! A step runs the measurement update, redesigns the grid from the second
//! step on, moves the grid through the deterministic part of the dynamics,
//! and finishes with a convolution-type prediction: an FFT convolution with
//! the transition kernel, or the sine-transform solution of the explicit
//! Fokker-Planck scheme for continuous-time dynamics.

pub mod fst;
pub mod kernel;
pub mod noise;

pub use fst::{
    BoundaryCheck, FdmOperator, SpectralKernel, default_dt, eigen_values, fdm_coefficients, fst_apply, fst_time_update,
    lambda_pow, middle_row_cd, spectral_kernel,
};
pub use kernel::{ConvKernel, KernelExtent, fft_convolve, fft_time_update, middle_row_dd, transition_kernel_dd};
pub use noise::{NoiseTransform, TransformedMeasurement, diagonalize_noise};

use crate::error::Result;
use crate::models::{LtiDynamics, MeasurementModel};
use crate::pmf::{FilterState, measurement_update, predict_with};
use crate::redesign::RedesignConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    /// FFT convolution with the discrete-time transition kernel. Continuous
    /// dynamics are used through their exact discrete equivalent.
    Fft { extent: KernelExtent },
    /// Sine-transform solution of the explicit scheme with step `dt`
    /// (`None` picks [`default_dt`]). Needs continuous dynamics whose
    /// diffusion is diagonal in lattice coordinates.
    Fst { dt: Option<f64>, boundary: BoundaryCheck },
}

impl Default for Predictor {
    fn default() -> Self {
        Predictor::Fft { extent: KernelExtent::Full }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpmfConfig {
    pub redesign: Option<RedesignConfig>,
    pub predictor: Predictor,
}

impl Default for EpmfConfig {
    fn default() -> Self {
        Self { redesign: Some(RedesignConfig::default()), predictor: Predictor::default() }
    }
}

/// Prediction half of an ePMF step. `dynamics` may change between calls.
pub fn epmf_predict(state: FilterState, dynamics: &LtiDynamics, config: &EpmfConfig) -> Result<FilterState> {
    let model = dynamics.discrete_equivalent();
    match config.predictor {
        Predictor::Fft { extent } => predict_with(state, &model, config.redesign.as_ref(), |pmd, dst| {
            kernel::fft_propagate(pmd, dst, &model, extent)
        }),
        Predictor::Fst { dt, boundary } => predict_with(state, &model, config.redesign.as_ref(), |pmd, _dst| {
            let k = spectral_kernel(dynamics, pmd.grid(), dt)?;
            fst::fst_propagate(pmd, &k, boundary)
        }),
    }
}

/// One ePMF step: measurement update with `z`, then [`epmf_predict`].
pub fn epmf_step<M: MeasurementModel + ?Sized>(
    state: FilterState,
    z: f64,
    dynamics: &LtiDynamics,
    measurement: &M,
    config: &EpmfConfig,
) -> Result<FilterState> {
    let state = measurement_update(state, z, measurement)?;
    epmf_predict(state, dynamics, config)
}
