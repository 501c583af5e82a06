//! Point-mass filtering on structured grids.
//!
//! The crate implements the classic point-mass filter with a dense
//! transition-matrix prediction and the efficient variants whose prediction
//! is a convolution: an FFT convolution for discrete-time linear dynamics and
//! a discrete-sine-transform solution of the explicit Fokker-Planck scheme for
//! continuous-time dynamics. A bootstrap particle filter is included as a
//! baseline, along with the terrain-aided navigation models used to compare
//! them.
//!
//! The crate is `no_std` (with `alloc`); the default `std` feature only
//! switches the float math to the platform implementation.

#![no_std]
// NaN-rejecting `!(x > 0.0)` checks and index loops over small fixed dims are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod epmf;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod models;
pub mod pf;
pub mod pmf;
pub mod redesign;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{Estimate, Grid, PointMassDensity};
pub use models::{
    Flavor, GaussianMixture, InitialCondition, LtiDynamics, MeasurementModel, TerrainMap, TerrainMeasurement,
};
pub use pmf::FilterState;

pub use nalgebra::{DMatrix, DVector};
