//! The classic point-mass filter: Bayes update on the grid and the dense
//! transition-matrix prediction.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Estimate, Grid, PointMassDensity};
use crate::linalg::{self, GaussianDensity};
use crate::models::{DiscreteModel, InitialCondition, MeasurementModel};
use crate::redesign::{self, RedesignConfig};

/// Filter state between steps.
///
/// `pmd` is the predictive density for measurement `step` (the prior for
/// `step == 0`), or the filtering density right after
/// [`measurement_update`]. `estimate` caches the moments of the most recent
/// filtering density.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub pmd: PointMassDensity,
    pub step: usize,
    pub estimate: Option<Estimate>,
}

impl FilterState {
    pub fn new(pmd: PointMassDensity) -> Result<Self> {
        let pmd = pmd.normalized()?;
        Ok(Self { pmd, step: 0, estimate: None })
    }
}

/// Prior density sampled on an axis-aligned grid spanning
/// `±sigma_mult·σ` around the prior mean.
pub fn init_filter(init: &InitialCondition, sigma_mult: f64, counts: &[usize]) -> Result<FilterState> {
    let grid = Grid::from_moments(&init.mean, &init.cov, sigma_mult, counts)?;
    FilterState::new(PointMassDensity::gaussian(grid, &init.mean, &init.cov)?)
}

/// Bayes rule on the grid: `w_i ← p(z | ξ_i) w_i`, renormalised.
pub fn measurement_update<M: MeasurementModel + ?Sized>(state: FilterState, z: f64, model: &M) -> Result<FilterState> {
    let lik = model.likelihoods(z, &state.pmd.grid().points())?;
    let (grid, mut weights) = state.pmd.into_parts();
    for (w, l) in weights.iter_mut().zip(&lik) {
        *w *= l;
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::MeasurementInconsistent(z));
    }
    let pmd = PointMassDensity::new(grid, weights)?.normalized()?;
    let estimate = pmd.moments()?;
    Ok(FilterState { pmd, step: state.step, estimate: Some(estimate) })
}

/// Transition densities between two grids: entry `(j, i)` is
/// `N(ξ_dst(j); F ξ_src(i) + u, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub values: DMatrix<f64>,
    pub source: Grid,
    pub destination: Grid,
}

/// Deviations `ξ_dst(j) - F ξ_src(i) - u` are assembled from lattice terms so
/// large grid offsets cancel before any products are formed.
struct Deviations {
    dst: DMatrix<f64>,
    src: DMatrix<f64>,
}

impl Deviations {
    fn new(source: &Grid, destination: &Grid, model: &DiscreteModel) -> Result<Self> {
        let n = source.dim();
        if destination.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: destination.dim() });
        }
        linalg::require_square(&model.transition, n)?;
        let f = &model.transition;
        let shift = destination.offset() - f * source.offset() - &model.input;
        let mut dst = lattice_points(destination);
        let dst_basis = destination.basis();
        dst = dst_basis * dst;
        for mut c in dst.column_iter_mut() {
            c += &shift;
        }
        let src = (f * source.basis()) * lattice_points(source);
        Ok(Self { dst, src })
    }
}

fn lattice_points(grid: &Grid) -> DMatrix<f64> {
    let n = grid.dim();
    let mut m = DMatrix::zeros(n, grid.len());
    for (i, mut c) in m.column_iter_mut().enumerate() {
        c.copy_from(&grid.lattice_point(i));
    }
    m
}

pub fn build_dense_tpm(source: &Grid, destination: &Grid, model: &DiscreteModel) -> Result<TransitionMatrix> {
    let dev = Deviations::new(source, destination, model)?;
    let gauss = GaussianDensity::new(&model.noise)?;
    let n = source.dim();
    let mut d = DVector::zeros(n);
    let values = DMatrix::from_fn(destination.len(), source.len(), |j, i| {
        for r in 0..n {
            d[r] = dev.dst[(r, j)] - dev.src[(r, i)];
        }
        gauss.density_slice(d.as_slice())
    });
    Ok(TransitionMatrix { values, source: source.clone(), destination: destination.clone() })
}

/// `w' = δ_src · T w` on the destination grid, renormalised.
pub fn dense_time_update(state: FilterState, tpm: &TransitionMatrix) -> Result<FilterState> {
    if !state.pmd.grid().same_points(&tpm.source, 1e-12) {
        return Err(Error::MisalignedGrids);
    }
    let w = DVector::from_column_slice(state.pmd.weights());
    let raw = (&tpm.values * w) * state.pmd.delta();
    let pmd = PointMassDensity::new(tpm.destination.clone(), raw.as_slice().to_vec())?.normalized()?;
    Ok(FilterState { pmd, step: state.step + 1, estimate: state.estimate })
}

/// Unnormalised dense prediction `δ_src · T w` without storing `T`.
///
/// Same `O(N²)` cost as the matrix product but `O(N)` memory, which keeps the
/// large-grid timing baselines feasible.
pub fn dense_propagate(pmd: &PointMassDensity, destination: &Grid, model: &DiscreteModel) -> Result<Vec<f64>> {
    let source = pmd.grid();
    let dev = Deviations::new(source, destination, model)?;
    let gauss = GaussianDensity::new(&model.noise)?;
    let n = source.dim();
    let delta = pmd.delta();
    let w = pmd.weights();
    let mut d = alloc::vec![0.0; n];
    let mut out = Vec::with_capacity(destination.len());
    for j in 0..destination.len() {
        let mut acc = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            for r in 0..n {
                d[r] = dev.dst[(r, j)] - dev.src[(r, i)];
            }
            acc += gauss.density_slice(&d) * wi;
        }
        out.push(acc * delta);
    }
    Ok(out)
}

/// Prediction half of a filter step: optional grid redesign (from the
/// second step on), grid movement through `model`, then `propagate`, which
/// maps the filtering density and the moved grid to unnormalised weights.
pub fn predict_with<P>(
    state: FilterState,
    model: &DiscreteModel,
    redesign_cfg: Option<&RedesignConfig>,
    propagate: P,
) -> Result<FilterState>
where
    P: FnOnce(&PointMassDensity, &Grid) -> Result<Vec<f64>>,
{
    let FilterState { pmd, step, estimate } = state;
    let pmd = match redesign_cfg {
        Some(cfg) if step > 0 => redesign::redesign(&pmd, model, cfg)?,
        _ => pmd,
    };
    let destination = pmd.grid().moved(&model.transition, &model.input)?;
    let raw = propagate(&pmd, &destination)?;
    let pmd = PointMassDensity::new(destination, raw)?.normalized()?;
    Ok(FilterState { pmd, step: step + 1, estimate })
}

/// Dense prediction step of the classic filter.
pub fn pmf_predict(
    state: FilterState,
    model: &DiscreteModel,
    redesign_cfg: Option<&RedesignConfig>,
) -> Result<FilterState> {
    predict_with(state, model, redesign_cfg, |pmd, dst| {
        let tpm = build_dense_tpm(pmd.grid(), dst, model)?;
        let w = DVector::from_column_slice(pmd.weights());
        Ok(((&tpm.values * w) * pmd.delta()).as_slice().to_vec())
    })
}

/// One step of the classic point-mass filter: measurement update with `z`,
/// then the dense prediction. The returned state carries the predictive
/// density for the next measurement and the filtering estimate for this one.
pub fn pmf_step<M: MeasurementModel + ?Sized>(
    state: FilterState,
    z: f64,
    model: &DiscreteModel,
    measurement: &M,
    redesign_cfg: Option<&RedesignConfig>,
) -> Result<FilterState> {
    let state = measurement_update(state, z, measurement)?;
    pmf_predict(state, model, redesign_cfg)
}
