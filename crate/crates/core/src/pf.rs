//! Bootstrap particle filter with systematic resampling.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::Estimate;
use crate::linalg;
use crate::models::{DiscreteModel, InitialCondition, MeasurementModel, standard_normal};

/// Particles (one per column) with normalised weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: DMatrix<f64>,
    pub weights: Vec<f64>,
    /// Weighted estimate of the last measurement update, taken before
    /// resampling.
    pub estimate: Option<Estimate>,
}

impl ParticleSet {
    pub fn new(particles: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != particles.ncols() {
            return Err(Error::DimensionMismatch { expected: particles.ncols(), actual: weights.len() });
        }
        let mut set = Self { particles, weights, estimate: None };
        set.normalize()?;
        Ok(set)
    }

    /// `count` equally weighted draws from the prior.
    pub fn from_prior<R: Rng + ?Sized>(init: &InitialCondition, count: usize, rng: &mut R) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("particle count must be positive".into()));
        }
        let n = init.mean.len();
        let l = linalg::psd_factor(&init.cov)?;
        let mut particles = DMatrix::zeros(n, count);
        for mut c in particles.column_iter_mut() {
            c.copy_from(&(&init.mean + &l * standard_normal(n, rng)));
        }
        Self::new(particles, alloc::vec![1.0; count])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.nrows()
    }

    fn normalize(&mut self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::DegenerateWeights);
        }
        self.weights.iter_mut().for_each(|w| *w /= sum);
        Ok(())
    }
}

/// Weighted mean and covariance of the particles.
pub fn pf_estimate(set: &ParticleSet) -> Estimate {
    let n = set.dim();
    // centre on the first particle to keep large coordinates out of the sums
    let origin = set.particles.column(0).into_owned();
    let mut m1 = DVector::zeros(n);
    let mut m2 = DMatrix::zeros(n, n);
    for (c, &w) in set.particles.column_iter().zip(&set.weights) {
        let d = c - &origin;
        m1.axpy(w, &d, 1.0);
        m2.ger(w, &d, &d, 1.0);
    }
    let cov = m2 - &m1 * m1.transpose();
    Estimate { mean: origin + m1, cov: (&cov + cov.transpose()) * 0.5 }
}

/// Systematic resampling: one uniform phase `u ∈ [0, 1/N)`, then the
/// inverse CDF at `u + k/N` by binary search on the cumulative weights.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    systematic_resample_with_phase(weights, rng.random::<f64>())
}

/// [`systematic_resample`] with an explicit phase in `[0, 1)`.
pub fn systematic_resample_with_phase(weights: &[f64], phase: f64) -> Vec<usize> {
    let n = weights.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    (0..n)
        .map(|k| {
            let u = (phase + k as f64) / n as f64 * total;
            cdf.partition_point(|&c| c <= u).min(n - 1)
        })
        .collect()
}

/// Weight by the measurement, cache the estimate, resample, then propagate
/// through the dynamics.
pub fn pf_step<M: MeasurementModel + ?Sized, R: Rng + ?Sized>(
    set: ParticleSet,
    z: f64,
    model: &DiscreteModel,
    measurement: &M,
    rng: &mut R,
) -> Result<ParticleSet> {
    let lik = measurement.likelihoods(z, &set.particles)?;
    let weights: Vec<f64> = set.weights.iter().zip(&lik).map(|(w, l)| w * l).collect();
    let mut weighted = ParticleSet { particles: set.particles, weights, estimate: None };
    weighted.normalize()?;
    let estimate = pf_estimate(&weighted);

    let idx = systematic_resample(&weighted.weights, rng);
    let n = weighted.dim();
    let np = idx.len();
    let noise = linalg::psd_factor(&model.noise)?;
    let mut particles = DMatrix::zeros(n, np);
    for (mut dst, &i) in particles.column_iter_mut().zip(&idx) {
        let x = weighted.particles.column(i);
        let next = &model.transition * x + &model.input + &noise * standard_normal(n, rng);
        dst.copy_from(&next);
    }
    Ok(ParticleSet { particles, weights: alloc::vec![1.0 / np as f64; np], estimate: Some(estimate) })
}
