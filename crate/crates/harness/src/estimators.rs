//! Filters driven step by step over one measurement sequence.

use std::time::Instant;

use epmf_core::epmf::{BoundaryCheck, EpmfConfig, KernelExtent, Predictor, epmf_predict};
use epmf_core::models::{DiscreteModel, MeasurementModel};
use epmf_core::pf::{ParticleSet, pf_step};
use epmf_core::pmf::{FilterState, dense_propagate, init_filter, measurement_update, pmf_predict, predict_with};
use epmf_core::redesign::RedesignConfig;
use epmf_core::{Error, Estimate, Result};
use rand_chacha::ChaCha8Rng;

use crate::config::EstimatorSpec;
use crate::scenario::Scenario;

/// Grids up to this size use an explicit transition matrix in the dense filter.
pub const DENSE_MATRIX_LIMIT: usize = 4096;

/// Grid size and span shared by the grid filters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub counts: Vec<usize>,
    pub sigma_mult: f64,
}

/// Filtering estimates and wall-clock step times of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRun {
    /// One estimate per measurement.
    pub estimates: Vec<Estimate>,
    /// Seconds spent in each step (update plus prediction).
    pub step_times: Vec<f64>,
    /// Steps whose update was skipped or replaced by a fallback.
    pub fallbacks: usize,
}

pub trait Estimator {
    /// Consumes `z` and returns the filtering estimate for it.
    fn step(&mut self, z: f64) -> Result<Estimate>;

    /// Number of fallbacks taken so far.
    fn fallbacks(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum GridPredictor {
    Dense,
    Epmf(EpmfConfig),
}

/// Dense or efficient point-mass filter.
pub struct GridFilter<'a> {
    scenario: &'a Scenario,
    state: Option<FilterState>,
    predictor: GridPredictor,
    model: DiscreteModel,
    redesign: RedesignConfig,
    fallbacks: usize,
}

impl<'a> GridFilter<'a> {
    pub fn new(spec: &EstimatorSpec, scenario: &'a Scenario, grid: &GridSettings) -> Result<Self> {
        let redesign = RedesignConfig::new(grid.sigma_mult)?;
        let predictor = match *spec {
            EstimatorSpec::PmfDense => GridPredictor::Dense,
            EstimatorSpec::EpmfFft => GridPredictor::Epmf(EpmfConfig {
                redesign: Some(redesign),
                predictor: Predictor::Fft { extent: KernelExtent::Full },
            }),
            EstimatorSpec::EpmfFst { dt } => {
                if scenario.continuous.is_none() {
                    return Err(Error::InvalidArgument(format!("{spec} needs continuous dynamics")));
                }
                GridPredictor::Epmf(EpmfConfig {
                    redesign: Some(redesign),
                    predictor: Predictor::Fst { dt: Some(dt), boundary: BoundaryCheck::Off },
                })
            }
            EstimatorSpec::Pf { .. } => return Err(Error::InvalidArgument(format!("{spec} is not a grid filter"))),
        };
        let state = init_filter(&scenario.init, grid.sigma_mult, &grid.counts)?;
        Ok(Self {
            scenario,
            state: Some(state),
            predictor,
            model: scenario.dynamics.discrete_equivalent(),
            redesign,
            fallbacks: 0,
        })
    }

    /// Predictive density for the next measurement.
    pub fn state(&self) -> &FilterState {
        self.state.as_ref().expect("filter state lost after a failed step")
    }

    fn predict(&self, state: FilterState) -> Result<FilterState> {
        match self.predictor {
            GridPredictor::Dense if state.pmd.grid().len() <= DENSE_MATRIX_LIMIT => {
                pmf_predict(state, &self.model, Some(&self.redesign))
            }
            GridPredictor::Dense => predict_with(state, &self.model, Some(&self.redesign), |pmd, dst| {
                dense_propagate(pmd, dst, &self.model)
            }),
            GridPredictor::Epmf(cfg) => {
                let dynamics = match cfg.predictor {
                    Predictor::Fst { .. } => self.scenario.continuous.as_ref().expect("checked in new"),
                    Predictor::Fft { .. } => &self.scenario.dynamics,
                };
                epmf_predict(state, dynamics, &cfg)
            }
        }
    }
}

impl Estimator for GridFilter<'_> {
    fn step(&mut self, z: f64) -> Result<Estimate> {
        let prior =
            self.state.take().ok_or_else(|| Error::InvalidState("filter state lost after a failed step".into()))?;
        let updated = match measurement_update(prior.clone(), z, &self.scenario.measurement) {
            Ok(s) => s,
            Err(Error::MeasurementInconsistent(_)) => {
                log::warn!(
                    "step {}: measurement {z} inconsistent with the predictive density; update skipped",
                    prior.step
                );
                self.fallbacks += 1;
                let estimate = prior.pmd.moments()?;
                FilterState { estimate: Some(estimate), ..prior }
            }
            Err(e) => return Err(e),
        };
        let estimate = updated.estimate.clone().expect("set by the update");
        self.state = Some(self.predict(updated)?);
        Ok(estimate)
    }

    fn fallbacks(&self) -> usize {
        self.fallbacks
    }
}

/// Likelihood that ignores the measurement.
struct Uninformative(usize);

impl MeasurementModel for Uninformative {
    fn dim(&self) -> usize {
        self.0
    }

    fn likelihood(&self, _z: f64, _state: &[f64]) -> Result<f64> {
        Ok(1.0)
    }
}

/// Bootstrap particle filter.
pub struct ParticleFilter<'a> {
    scenario: &'a Scenario,
    set: Option<ParticleSet>,
    model: DiscreteModel,
    rng: ChaCha8Rng,
    fallbacks: usize,
}

impl<'a> ParticleFilter<'a> {
    pub fn new(particles: usize, scenario: &'a Scenario, mut rng: ChaCha8Rng) -> Result<Self> {
        let set = ParticleSet::from_prior(&scenario.init, particles, &mut rng)?;
        Ok(Self { scenario, set: Some(set), model: scenario.dynamics.discrete_equivalent(), rng, fallbacks: 0 })
    }
}

impl Estimator for ParticleFilter<'_> {
    fn step(&mut self, z: f64) -> Result<Estimate> {
        let set = self.set.take().ok_or_else(|| Error::InvalidState("particle set lost after a failed step".into()))?;
        let next = match pf_step(set.clone(), z, &self.model, &self.scenario.measurement, &mut self.rng) {
            Ok(s) => s,
            Err(Error::DegenerateWeights) => {
                log::warn!(
                    "measurement {z}: all particle weights zero; restarting from the equally weighted prior particles"
                );
                self.fallbacks += 1;
                let flat = ParticleSet { weights: vec![1.0 / set.len() as f64; set.len()], ..set };
                pf_step(flat, z, &self.model, &Uninformative(self.scenario.dim()), &mut self.rng)?
            }
            Err(e) => return Err(e),
        };
        let estimate = next.estimate.clone().expect("set by pf_step");
        self.set = Some(next);
        Ok(estimate)
    }

    fn fallbacks(&self) -> usize {
        self.fallbacks
    }
}

/// Builds the estimator for `spec`; `rng` only feeds the particle filter.
pub fn build<'a>(
    spec: &EstimatorSpec,
    scenario: &'a Scenario,
    grid: &GridSettings,
    rng: ChaCha8Rng,
) -> Result<Box<dyn Estimator + 'a>> {
    Ok(match *spec {
        EstimatorSpec::Pf { particles } => Box::new(ParticleFilter::new(particles, scenario, rng)?),
        _ => Box::new(GridFilter::new(spec, scenario, grid)?),
    })
}

/// Runs `estimator` over `measurements`, timing every step.
pub fn run(estimator: &mut dyn Estimator, measurements: &[f64]) -> Result<EstimatorRun> {
    let mut estimates = Vec::with_capacity(measurements.len());
    let mut step_times = Vec::with_capacity(measurements.len());
    for &z in measurements {
        let t0 = Instant::now();
        let est = estimator.step(z)?;
        step_times.push(t0.elapsed().as_secs_f64());
        estimates.push(est);
    }
    Ok(EstimatorRun { estimates, step_times, fallbacks: estimator.fallbacks() })
}
