//! Models, prior and terrain measurement of one experiment.

use epmf_core::models::{
    CT_TURN_RATE, OutOfMapPolicy, Trajectory, make_coordinated_turn, make_random_walk, simulate_trajectory,
};
use epmf_core::redesign::kalman_predict;
use epmf_core::{Estimate, GaussianMixture, InitialCondition, LtiDynamics, TerrainMap, TerrainMeasurement};
use rand::Rng;

use crate::config::{ExperimentConfig, ModelKind, TerrainSource};
use crate::terrain::{SyntheticTerrain, TerrainError, load_terrain, synthesize_terrain};

/// Clearance around the nominal trajectory, in predictive standard deviations.
const MARGIN_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelKind,
    /// Dynamics used to simulate the truth and by the discrete-time filters.
    pub dynamics: LtiDynamics,
    /// Continuous-time twin for the sine-transform predictor, if the model has one.
    pub continuous: Option<LtiDynamics>,
    pub init: InitialCondition,
    pub measurement: TerrainMeasurement,
}

impl Scenario {
    /// Builds the scenario for `cfg`, generating or loading its terrain.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, TerrainError> {
        let (dynamics, continuous, init) = model_parts(cfg.model)?;
        let map = match &cfg.terrain {
            TerrainSource::File { path } => load_terrain(path)?,
            TerrainSource::Synthetic(params) => place_synthetic(params, &dynamics, &init, cfg.model, cfg.steps)?,
        };
        let measurement = terrain_measurement(cfg.model, map)?;
        Ok(Self { model: cfg.model, dynamics, continuous, init, measurement })
    }

    /// Scenario for `model` on a given map.
    pub fn with_map(model: ModelKind, map: TerrainMap) -> Result<Self, TerrainError> {
        let (dynamics, continuous, init) = model_parts(model)?;
        let measurement = terrain_measurement(model, map)?;
        Ok(Self { model, dynamics, continuous, init, measurement })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn simulate<R: Rng + ?Sized>(&self, steps: usize, rng: &mut R) -> epmf_core::Result<Trajectory> {
        simulate_trajectory(&self.dynamics, &self.init, &self.measurement, steps, rng)
    }
}

pub fn position_axes(model: ModelKind) -> [usize; 2] {
    match model {
        ModelKind::RandomWalk2d => [0, 1],
        ModelKind::CoordinatedTurn4d => [0, 2],
    }
}

fn terrain_measurement(model: ModelKind, map: TerrainMap) -> epmf_core::Result<TerrainMeasurement> {
    Ok(TerrainMeasurement::new(map, GaussianMixture::altimeter(), position_axes(model), model.dim())?
        .with_policy(OutOfMapPolicy::Clamp))
}

fn model_parts(model: ModelKind) -> epmf_core::Result<(LtiDynamics, Option<LtiDynamics>, InitialCondition)> {
    Ok(match model {
        ModelKind::RandomWalk2d => {
            let (d, c, init) = make_random_walk();
            (d, Some(c), init)
        }
        ModelKind::CoordinatedTurn4d => {
            let (d, init) = make_coordinated_turn(CT_TURN_RATE, 1.0)?;
            (d, None, init)
        }
    })
}

/// Predicted moments without measurements for `x_0 … x_K`.
pub fn nominal_moments(dynamics: &LtiDynamics, init: &InitialCondition, steps: usize) -> Vec<Estimate> {
    let model = dynamics.discrete_equivalent();
    let mut est = Estimate { mean: init.mean.clone(), cov: init.cov.clone() };
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let next = kalman_predict(&est, &model);
        out.push(std::mem::replace(&mut est, next));
    }
    out.push(est);
    out
}

/// Synthesises the map centred on the bounding box of the nominal trajectory.
/// Warns if the map is too small to hold the box plus a clearance of
/// `MARGIN_SIGMAS` open-loop standard deviations.
fn place_synthetic(
    params: &SyntheticTerrain,
    dynamics: &LtiDynamics,
    init: &InitialCondition,
    model: ModelKind,
    steps: usize,
) -> Result<TerrainMap, TerrainError> {
    let [ax, ay] = position_axes(model);
    let moments = nominal_moments(dynamics, init, steps);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    let mut sd: f64 = 0.0;
    for e in &moments {
        for (k, a) in [ax, ay].into_iter().enumerate() {
            lo[k] = lo[k].min(e.mean[a]);
            hi[k] = hi[k].max(e.mean[a]);
            sd = sd.max(e.cov[(a, a)].sqrt());
        }
    }
    let extent =
        [params.cols.saturating_sub(1) as f64 * params.cell, params.rows.saturating_sub(1) as f64 * params.cell];
    let origin = [0.5 * (lo[0] + hi[0] - extent[0]), 0.5 * (lo[1] + hi[1] - extent[1])];
    let margin = MARGIN_SIGMAS * sd;
    for k in 0..2 {
        if hi[k] - lo[k] + 2.0 * margin > extent[k] {
            log::warn!(
                "synthetic map spans {:.0} m along axis {k} but the nominal trajectory needs {:.0} m; positions near the edge are clamped",
                extent[k],
                hi[k] - lo[k] + 2.0 * margin
            );
        }
    }
    synthesize_terrain(params, origin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_map_contains_nominal_trajectory() {
        for model in [ModelKind::RandomWalk2d, ModelKind::CoordinatedTurn4d] {
            let cfg = ExperimentConfig { model, ..Default::default() };
            let s = Scenario::from_config(&cfg).unwrap();
            let [ax, ay] = position_axes(model);
            for e in nominal_moments(&s.dynamics, &s.init, cfg.steps) {
                assert!(s.measurement.map.contains(e.mean[ax], e.mean[ay]));
            }
            assert_eq!(s.continuous.is_some(), model == ModelKind::RandomWalk2d);
        }
    }

    #[test]
    fn map_is_centred_on_trajectory() {
        let cfg = ExperimentConfig::default();
        let s = Scenario::from_config(&cfg).unwrap();
        let m = nominal_moments(&s.dynamics, &s.init, cfg.steps);
        let (x0, x1, y0, y1) = s.measurement.map.extent();
        let cx = 0.5 * (m[0].mean[0] + m[cfg.steps].mean[0]);
        let cy = 0.5 * (m[0].mean[1] + m[cfg.steps].mean[1]);
        assert!((0.5 * (x0 + x1) - cx).abs() < 1e-6);
        assert!((0.5 * (y0 + y1) - cy).abs() < 1e-6);
    }
}
