//! Spectral solution of the explicit Fokker-Planck scheme.
//!
//! On a grid that moves with the drift, the remaining Fokker-Planck terms
//! are diffusion along each lattice axis plus the volume change `-tr(A) p`.
//! One explicit Euler step of the central-difference discretisation is
//!
//! ```text
//! p'[i] = b p[i] + Σ_axes a_axis (p[i - e_axis] + p[i + e_axis])
//! a_axis = q_axis dt / (2 Δ_axis²)
//! b      = 1 - Σ_axes q_axis dt / Δ_axis² - dt tr(A)
//! ```
//!
//! with zero Dirichlet boundaries, where `q_axis` is the diffusion in
//! lattice coordinates. The operator is a Kronecker sum of constant
//! tridiagonal matrices, diagonalised by the DST-I, so `l` steps reduce to an
//! elementwise product of eigenvalues between two sine transforms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::kernel::ConvKernel;
use crate::error::{Error, Result};
use crate::grid::{Grid, PointMassDensity};
use crate::linalg;
use crate::models::{Flavor, LtiDynamics};
use crate::transform::dst1_nd;

/// Smallest centre coefficient accepted by [`default_dt`].
pub const DEFAULT_CENTER_MARGIN: f64 = 0.1;

/// Relative off-diagonal size above which lattice diffusion counts as
/// non-diagonal.
const DIAGONAL_TOL: f64 = 1e-9;

/// Coefficients of one explicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct FdmOperator {
    /// Off-diagonal coefficient per axis.
    pub a: Vec<f64>,
    /// Centre coefficient.
    pub b: f64,
    pub dt: f64,
    /// Steps per sampling period.
    pub substeps: usize,
}

/// Diagonal of `B⁻¹ Q B⁻ᵀ`.
pub fn lattice_diffusion(q: &DMatrix<f64>, basis: &DMatrix<f64>) -> Result<Vec<f64>> {
    let b_inv = linalg::inverse(basis)?;
    let ql = &b_inv * q * b_inv.transpose();
    let n = ql.nrows();
    let scale = (0..n).map(|i| ql[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for r in 0..n {
        for c in 0..n {
            if r != c && ql[(r, c)].abs() > DIAGONAL_TOL * scale {
                return Err(Error::NonDiagonalDiffusion(ql[(r, c)]));
            }
        }
    }
    Ok((0..n).map(|i| ql[(i, i)]).collect())
}

fn require_continuous(dynamics: &LtiDynamics) -> Result<()> {
    if dynamics.flavor() != Flavor::Continuous {
        return Err(Error::InvalidArgument("the sine-transform predictor needs continuous dynamics".into()));
    }
    Ok(())
}

/// Sum `Σ q_axis / Δ_axis² + tr(A)`: the centre coefficient is `1 - dt` times it.
fn center_rate(q_lat: &[f64], steps: &[f64], trace: f64) -> f64 {
    q_lat.iter().zip(steps).map(|(q, d)| q / (d * d)).sum::<f64>() + trace
}

/// Coefficients for step `dt` on the grid's current basis. The step is
/// shrunk so that a whole number of steps spans the sampling period.
pub fn fdm_coefficients(dynamics: &LtiDynamics, grid: &Grid, dt: f64) -> Result<FdmOperator> {
    require_continuous(dynamics)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let ts = dynamics.sample_period();
    let substeps = ((ts / dt).round() as usize).max(1);
    let dt_eff = ts / substeps as f64;
    operator_at(dynamics, grid.basis(), grid.steps(), dt_eff, substeps)
}

fn operator_at(
    dynamics: &LtiDynamics,
    basis: &DMatrix<f64>,
    steps: &[f64],
    dt: f64,
    substeps: usize,
) -> Result<FdmOperator> {
    let q_lat = lattice_diffusion(dynamics.noise(), basis)?;
    let trace = dynamics.matrix().trace();
    let rate = center_rate(&q_lat, steps, trace);
    let b = 1.0 - dt * rate;
    if !(b > 0.0) {
        let max_dt = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
        return Err(Error::UnstableStep { dt, center: b, max_dt });
    }
    let a = q_lat.iter().zip(steps).map(|(q, d)| q * dt / (2.0 * d * d)).collect();
    Ok(FdmOperator { a, b, dt, substeps })
}

/// Largest step keeping the centre coefficient at or above
/// [`DEFAULT_CENTER_MARGIN`], rounded down to a whole fraction of the
/// sampling period.
pub fn default_dt(dynamics: &LtiDynamics, grid: &Grid) -> Result<f64> {
    require_continuous(dynamics)?;
    let q_lat = lattice_diffusion(dynamics.noise(), grid.basis())?;
    let rate = center_rate(&q_lat, grid.steps(), dynamics.matrix().trace());
    let ts = dynamics.sample_period();
    if rate <= 0.0 {
        return Ok(ts);
    }
    let max_dt = (1.0 - DEFAULT_CENTER_MARGIN) / rate;
    let l = (ts / max_dt).ceil().max(1.0);
    Ok(ts / l)
}

/// Eigenvalues `b + Σ 2 a_axis cos(k_axis π / (N_axis + 1))`, `k = 1..N`,
/// as a column-major tensor of shape `counts`.
pub fn eigen_values(op: &FdmOperator, counts: &[usize]) -> Vec<f64> {
    let per_axis: Vec<Vec<f64>> = counts
        .iter()
        .zip(&op.a)
        .map(|(&n, &a)| (1..=n).map(|k| 2.0 * a * (k as f64 * PI / (n as f64 + 1.0)).cos()).collect())
        .collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; counts.len()];
    for _ in 0..total {
        out.push(op.b + idx.iter().zip(&per_axis).map(|(&i, v)| v[i]).sum::<f64>());
        for a in 0..idx.len() {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// Accumulated eigenvalues of `l` explicit steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKernel {
    pub shape: Vec<usize>,
    pub lambda_pow: Vec<f64>,
}

impl SpectralKernel {
    /// `λ^l` for time-invariant coefficients.
    pub fn power(shape: Vec<usize>, eigs: &[f64], l: usize) -> Self {
        let lambda_pow = eigs.iter().map(|v| v.powi(l as i32)).collect();
        Self { shape, lambda_pow }
    }

    pub fn identity(shape: Vec<usize>) -> Self {
        let total = shape.iter().product();
        Self { shape, lambda_pow: vec![1.0; total] }
    }
}

/// Hadamard product of per-step eigenvalue tensors.
pub fn lambda_pow(shape: Vec<usize>, eigs: &[Vec<f64>]) -> Result<SpectralKernel> {
    let total: usize = shape.iter().product();
    let mut acc = vec![1.0; total];
    for e in eigs {
        if e.len() != total {
            return Err(Error::DimensionMismatch { expected: total, actual: e.len() });
        }
        acc.iter_mut().zip(e).for_each(|(a, v)| *a *= v);
    }
    Ok(SpectralKernel { shape, lambda_pow: acc })
}

/// Spectral kernel over one sampling period for a grid at the start of it.
///
/// With `A ≠ 0` the lattice basis evolves as `exp(A t) B`, so the
/// coefficients are recomputed at the start of every step.
pub fn spectral_kernel(dynamics: &LtiDynamics, grid: &Grid, dt: Option<f64>) -> Result<SpectralKernel> {
    let dt = match dt {
        Some(dt) => dt,
        None => default_dt(dynamics, grid)?,
    };
    let op = fdm_coefficients(dynamics, grid, dt)?;
    let counts = grid.counts().to_vec();
    let a = dynamics.matrix();
    if a.iter().all(|&v| v == 0.0) {
        return Ok(SpectralKernel::power(counts.clone(), &eigen_values(&op, &counts), op.substeps));
    }
    let mut eigs = Vec::with_capacity(op.substeps);
    for s in 0..op.substeps {
        let basis = linalg::expm(&(a * (s as f64 * op.dt))) * grid.basis();
        let step_op = operator_at(dynamics, &basis, grid.steps(), op.dt, op.substeps)?;
        eigs.push(eigen_values(&step_op, &counts));
    }
    lambda_pow(counts, &eigs)
}

/// `R (Λ ⊙ R w) · Π 2 / (N_axis + 1)`: the weights after the `l` explicit
/// steps summarised by `lambda_pow`, without renormalisation.
pub fn fst_apply(weights: &[f64], kernel: &SpectralKernel) -> Result<Vec<f64>> {
    let total: usize = kernel.shape.iter().product();
    if weights.len() != total || kernel.lambda_pow.len() != total {
        return Err(Error::DimensionMismatch { expected: total, actual: weights.len() });
    }
    let mut data = weights.to_vec();
    dst1_nd(&mut data, &kernel.shape);
    let scale: f64 = kernel.shape.iter().map(|&n| 2.0 / (n as f64 + 1.0)).product();
    data.iter_mut().zip(&kernel.lambda_pow).for_each(|(d, l)| *d *= l * scale);
    dst1_nd(&mut data, &kernel.shape);
    Ok(data)
}

/// What to do when the density is not negligible at the grid boundary,
/// where the Dirichlet condition absorbs mass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BoundaryCheck {
    #[default]
    Off,
    /// Log a warning when a boundary weight exceeds `tol` times the peak.
    Warn { tol: f64 },
    /// Fail with [`Error::BoundaryLeak`] under the same condition.
    Error { tol: f64 },
}

/// Largest boundary weight relative to the peak weight.
pub fn boundary_ratio(weights: &[f64], shape: &[usize]) -> f64 {
    let peak = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if peak == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    let mut idx = vec![0usize; shape.len()];
    for &w in weights {
        if idx.iter().zip(shape).any(|(&i, &n)| i == 0 || i + 1 == n) {
            worst = worst.max(w.abs());
        }
        for a in 0..idx.len() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    worst / peak
}

fn check_boundary(weights: &[f64], shape: &[usize], check: BoundaryCheck) -> Result<()> {
    let (tol, fail) = match check {
        BoundaryCheck::Off => return Ok(()),
        BoundaryCheck::Warn { tol } => (tol, false),
        BoundaryCheck::Error { tol } => (tol, true),
    };
    let ratio = boundary_ratio(weights, shape);
    if ratio > tol {
        if fail {
            return Err(Error::BoundaryLeak { mass: ratio });
        }
        log::warn!("boundary weight {ratio:e} of peak exceeds {tol:e}; Dirichlet boundary absorbs mass");
    }
    Ok(())
}

/// Unnormalised spectral prediction with the boundary check applied.
pub fn fst_propagate(pmd: &PointMassDensity, kernel: &SpectralKernel, check: BoundaryCheck) -> Result<Vec<f64>> {
    if pmd.grid().counts() != kernel.shape.as_slice() {
        return Err(Error::MisalignedGrids);
    }
    check_boundary(pmd.weights(), &kernel.shape, check)?;
    let mut raw = fst_apply(pmd.weights(), kernel)?;
    raw.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(raw)
}

/// Spectral prediction onto `destination`, renormalised.
pub fn fst_time_update(
    pmd: &PointMassDensity,
    destination: &Grid,
    kernel: &SpectralKernel,
    check: BoundaryCheck,
) -> Result<PointMassDensity> {
    if destination.counts() != kernel.shape.as_slice() {
        return Err(Error::MisalignedGrids);
    }
    let raw = fst_propagate(pmd, kernel, check)?;
    PointMassDensity::new(destination.clone(), raw)?.normalized()
}

/// Middle row of the `l`-step operator as a convolution kernel.
///
/// Row `m` of `R diag(Λ) R · Π 2/(N+1)` is one DST-I of `Λ ⊙ r_m` with
/// `r_m[k] = Π sin(m k π / (N + 1))`. The values are divided by
/// `cell_volume` so that the convolution's volume factor cancels.
pub fn middle_row_cd(kernel: &SpectralKernel, cell_volume: f64) -> ConvKernel {
    let shape = &kernel.shape;
    let rows: Vec<Vec<f64>> = shape
        .iter()
        .map(|&n| {
            let m = n.div_ceil(2);
            (1..=n).map(|k| (m as f64 * k as f64 * PI / (n as f64 + 1.0)).sin()).collect()
        })
        .collect();
    let total: usize = shape.iter().product();
    let mut data = Vec::with_capacity(total);
    let mut idx = vec![0usize; shape.len()];
    for i in 0..total {
        let r: f64 = idx.iter().zip(&rows).map(|(&k, row)| row[k]).product();
        data.push(kernel.lambda_pow[i] * r);
        for a in 0..idx.len() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    dst1_nd(&mut data, shape);
    let scale: f64 = shape.iter().map(|&n| 2.0 / (n as f64 + 1.0)).product::<f64>() / cell_volume;
    data.iter_mut().for_each(|v| *v *= scale);
    // row m indexed by source s; the row is symmetric about m, so the same
    // array read as offset d = m - s + h with h = m is the kernel
    let half = shape.iter().map(|&n| (n - 1) / 2).collect();
    ConvKernel::new(half, data).expect("odd counts give matching lengths")
}
