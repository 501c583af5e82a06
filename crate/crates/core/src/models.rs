//! Linear dynamics, terrain measurement and the two navigation models.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// `x[k+1] = F x[k] + u + w`, `w ~ N(0, Q)`.
    Discrete,
    /// `dx = (A x + u) dt + dβ`, `E[dβ dβᵀ] = Q dt`.
    Continuous,
}

/// Linear time-invariant dynamics over one sampling period.
///
/// For the discrete flavour `matrix` is `F` and `noise` is the step
/// covariance; for the continuous flavour they are `A` and the diffusion
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiDynamics {
    flavor: Flavor,
    matrix: DMatrix<f64>,
    input: DVector<f64>,
    noise: DMatrix<f64>,
    sample_period: f64,
}

impl LtiDynamics {
    pub fn discrete(f: DMatrix<f64>, u: DVector<f64>, q: DMatrix<f64>, ts: f64) -> Result<Self> {
        let d = Self::validated(Flavor::Discrete, f, u, q, ts)?;
        linalg::inverse(&d.matrix)?;
        Ok(d)
    }

    pub fn continuous(a: DMatrix<f64>, u: DVector<f64>, q: DMatrix<f64>, ts: f64) -> Result<Self> {
        Self::validated(Flavor::Continuous, a, u, q, ts)
    }

    fn validated(flavor: Flavor, m: DMatrix<f64>, u: DVector<f64>, q: DMatrix<f64>, ts: f64) -> Result<Self> {
        let n = m.nrows();
        linalg::require_square(&m, n)?;
        linalg::require_square(&q, n)?;
        if u.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: u.len() });
        }
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::InvalidArgument(format!("sampling period must be positive, got {ts}")));
        }
        if m.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dynamics must be finite".into()));
        }
        // PSD check; the factor itself is not kept
        linalg::psd_factor(&q)?;
        Ok(Self { flavor, matrix: m, input: u, noise: q, sample_period: ts })
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `F` for discrete dynamics, `A` for continuous ones.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn input(&self) -> &DVector<f64> {
        &self.input
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    /// The exact discrete-time equivalent over one sampling period.
    pub fn discrete_equivalent(&self) -> DiscreteModel {
        match self.flavor {
            Flavor::Discrete => {
                DiscreteModel { transition: self.matrix.clone(), input: self.input.clone(), noise: self.noise.clone() }
            }
            Flavor::Continuous => {
                let (transition, input, noise) =
                    linalg::van_loan(&self.matrix, &self.input, &self.noise, self.sample_period);
                DiscreteModel { transition, input, noise }
            }
        }
    }
}

/// `x[k+1] = transition · x[k] + input + w`, `w ~ N(0, noise)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub transition: DMatrix<f64>,
    pub input: DVector<f64>,
    pub noise: DMatrix<f64>,
}

/// `exp(A ts)`.
pub fn discretize(a: &DMatrix<f64>, ts: f64) -> DMatrix<f64> {
    linalg::expm(&(a * ts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl InitialCondition {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        linalg::require_square(&cov, mean.len())?;
        linalg::cholesky_lower(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let l = linalg::psd_factor(&self.cov).expect("validated covariance");
        &self.mean + l * standard_normal(self.mean.len(), rng)
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Scalar Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<MixtureComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights must be >= 0 and sum to 1, got {total}")));
        }
        if let Some(c) = components.iter().find(|c| !(c.variance > 0.0 && c.variance.is_finite())) {
            return Err(Error::InvalidArgument(format!("component variance must be positive, got {}", c.variance)));
        }
        Ok(Self { components })
    }

    pub fn single(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![MixtureComponent { weight: 1.0, mean, variance }])
    }

    /// Altimeter noise: equal-weight components `N(0, 1)` and `N(20, 1)`,
    /// the second one standing in for unmapped bridges and tunnels.
    pub fn altimeter() -> Self {
        Self::new(vec![
            MixtureComponent { weight: 0.5, mean: 0.0, variance: 1.0 },
            MixtureComponent { weight: 0.5, mean: 20.0, variance: 1.0 },
        ])
        .expect("valid constants")
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn pdf(&self, v: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let d = v - c.mean;
                c.weight * (-0.5 * d * d / c.variance).exp() / (2.0 * PI * c.variance).sqrt()
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("non-empty");
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let n: f64 = StandardNormal.sample(rng);
        chosen.mean + chosen.variance.sqrt() * n
    }
}

/// Altitude table on a regular raster.
///
/// Node `(row, col)` sits at `(origin_x + col·cell_x, origin_y + row·cell_y)`;
/// altitudes are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainMap {
    origin: [f64; 2],
    cell_size: [f64; 2],
    rows: usize,
    cols: usize,
    altitudes: Vec<f64>,
}

impl TerrainMap {
    pub fn new(origin: [f64; 2], cell_size: [f64; 2], rows: usize, cols: usize, altitudes: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidArgument(format!("terrain needs at least 2x2 nodes, got {rows}x{cols}")));
        }
        if altitudes.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, actual: altitudes.len() });
        }
        if !cell_size.iter().all(|c| *c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument("cell size must be positive".into()));
        }
        if !origin.iter().chain(altitudes.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("terrain values must be finite".into()));
        }
        Ok(Self { origin, cell_size, rows, cols, altitudes })
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_size(&self) -> [f64; 2] {
        self.cell_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn altitudes(&self) -> &[f64] {
        &self.altitudes
    }

    pub fn node(&self, row: usize, col: usize) -> f64 {
        self.altitudes[row * self.cols + col]
    }

    /// `(x_min, x_max, y_min, y_max)` of the node lattice.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let [ox, oy] = self.origin;
        let [cx, cy] = self.cell_size;
        (ox, ox + (self.cols - 1) as f64 * cx, oy, oy + (self.rows - 1) as f64 * cy)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, x1, y0, y1) = self.extent();
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    /// Bilinear altitude at `(x, y)`.
    pub fn lookup(&self, x: f64, y: f64) -> Result<f64> {
        if !self.contains(x, y) {
            return Err(Error::OutOfMap { x, y });
        }
        Ok(self.bilinear(x, y))
    }

    /// Like [`lookup`](Self::lookup) but clamps to the map edge; the flag
    /// reports whether clamping happened.
    pub fn lookup_clamped(&self, x: f64, y: f64) -> (f64, bool) {
        let (x0, x1, y0, y1) = self.extent();
        let cx = x.clamp(x0, x1);
        let cy = y.clamp(y0, y1);
        let clamped = cx != x || cy != y || x.is_nan() || y.is_nan();
        (self.bilinear(cx, cy), clamped)
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = (x - self.origin[0]) / self.cell_size[0];
        let fy = (y - self.origin[1]) / self.cell_size[1];
        let c0 = (fx.floor().max(0.0) as usize).min(self.cols - 2);
        let r0 = (fy.floor().max(0.0) as usize).min(self.rows - 2);
        let tx = (fx - c0 as f64).clamp(0.0, 1.0);
        let ty = (fy - r0 as f64).clamp(0.0, 1.0);
        let a = self.node(r0, c0);
        let b = self.node(r0, c0 + 1);
        let c = self.node(r0 + 1, c0);
        let d = self.node(r0 + 1, c0 + 1);
        (1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * c + tx * d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfMapPolicy {
    #[default]
    Error,
    /// Clamp to the nearest map node and log a warning.
    Clamp,
}

/// Scalar measurement likelihood `p(z | x)` evaluated on states.
pub trait MeasurementModel {
    fn dim(&self) -> usize;

    fn likelihood(&self, z: f64, state: &[f64]) -> Result<f64>;

    /// Likelihoods for every column of `states`.
    fn likelihoods(&self, z: f64, states: &DMatrix<f64>) -> Result<Vec<f64>> {
        states.column_iter().map(|c| self.likelihood(z, c.as_slice())).collect()
    }
}

/// Terrain altitude below the vehicle plus mixture noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainMeasurement {
    pub map: TerrainMap,
    pub noise: GaussianMixture,
    /// State components holding the horizontal position `(x, y)`.
    pub position_axes: [usize; 2],
    pub state_dim: usize,
    pub policy: OutOfMapPolicy,
}

impl TerrainMeasurement {
    pub fn new(map: TerrainMap, noise: GaussianMixture, position_axes: [usize; 2], state_dim: usize) -> Result<Self> {
        if position_axes.iter().any(|&a| a >= state_dim) || position_axes[0] == position_axes[1] {
            return Err(Error::InvalidArgument(format!("bad position axes {position_axes:?} for dim {state_dim}")));
        }
        Ok(Self { map, noise, position_axes, state_dim, policy: OutOfMapPolicy::Error })
    }

    pub fn with_policy(mut self, policy: OutOfMapPolicy) -> Self {
        self.policy = policy;
        self
    }

    fn altitude(&self, state: &[f64]) -> Result<(f64, bool)> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch { expected: self.state_dim, actual: state.len() });
        }
        let x = state[self.position_axes[0]];
        let y = state[self.position_axes[1]];
        match self.policy {
            OutOfMapPolicy::Error => self.map.lookup(x, y).map(|h| (h, false)),
            OutOfMapPolicy::Clamp => Ok(self.map.lookup_clamped(x, y)),
        }
    }

    /// Noise-free measurement `h(x)`.
    pub fn measurement_function(&self, state: &[f64]) -> Result<f64> {
        self.altitude(state).map(|(h, _)| h)
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<f64> {
        let (h, clamped) = self.altitude(state)?;
        if clamped {
            log::warn!("true position outside terrain map; altitude clamped");
        }
        Ok(h + self.noise.sample(rng))
    }
}

impl MeasurementModel for TerrainMeasurement {
    fn dim(&self) -> usize {
        self.state_dim
    }

    fn likelihood(&self, z: f64, state: &[f64]) -> Result<f64> {
        let (h, _) = self.altitude(state)?;
        Ok(self.noise.pdf(z - h))
    }

    fn likelihoods(&self, z: f64, states: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut clamped = 0usize;
        let mut out = Vec::with_capacity(states.ncols());
        for c in states.column_iter() {
            let (h, cl) = self.altitude(c.as_slice())?;
            clamped += cl as usize;
            out.push(self.noise.pdf(z - h));
        }
        if clamped > 0 {
            log::warn!("{clamped} of {} states outside terrain map; altitudes clamped", states.ncols());
        }
        Ok(out)
    }
}

/// Elementwise likelihoods of `z` for a batch of states (columns).
pub fn measurement_likelihoods<M: MeasurementModel + ?Sized>(
    model: &M,
    z: f64,
    states: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    model.likelihoods(z, states)
}

/// Nearly constant horizontal position driven by a known velocity input.
///
/// Returns the discrete model, its continuous twin (`A = 0`, same diffusion,
/// exact because `ts = 1`) and the prior.
pub fn make_random_walk() -> (LtiDynamics, LtiDynamics, InitialCondition) {
    let u = DVector::from_vec(vec![50.0, 50.0]);
    let q = DMatrix::from_diagonal_element(2, 2, 100.0);
    let discrete = LtiDynamics::discrete(DMatrix::identity(2, 2), u.clone(), q.clone(), 1.0).expect("valid constants");
    let continuous = LtiDynamics::continuous(DMatrix::zeros(2, 2), u, q, 1.0).expect("valid constants");
    let init = InitialCondition::new(
        DVector::from_vec(vec![36569.0, 55581.0]),
        DMatrix::from_row_slice(2, 2, &[160.0, 20.0, 20.0, 90.0]),
    )
    .expect("valid constants");
    (discrete, continuous, init)
}

/// Turn rate of the coordinated-turn scenario, 30°/s.
pub const CT_TURN_RATE: f64 = PI / 6.0;

/// Coordinated turn with known rate `alpha` (rad/s), state `[px, vx, py, vy]`,
/// sampling period 1 s. The process noise is the standard white-acceleration
/// covariance of the turn model scaled by `q_psd`.
pub fn make_coordinated_turn(alpha: f64, q_psd: f64) -> Result<(LtiDynamics, InitialCondition)> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::SingularTurnRate);
    }
    let ts = 1.0;
    let dynamics = LtiDynamics::discrete(
        coordinated_turn_matrix(alpha, ts),
        DVector::zeros(4),
        coordinated_turn_noise(alpha, ts) * q_psd,
        ts,
    )?;
    let init = InitialCondition::new(
        DVector::from_vec(vec![36569.0, 50.0, 55581.0, 50.0]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![90.0, 160.0, 5.0, 5.0])),
    )?;
    Ok((dynamics, init))
}

pub fn coordinated_turn_matrix(alpha: f64, ts: f64) -> DMatrix<f64> {
    let (s, c) = (alpha * ts).sin_cos();
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0,
            s / alpha,
            0.0,
            (c - 1.0) / alpha,
            0.0,
            c,
            0.0,
            -s,
            0.0,
            (1.0 - c) / alpha,
            1.0,
            s / alpha,
            0.0,
            s,
            0.0,
            c,
        ],
    )
}

/// Unit-intensity process noise of the coordinated-turn model.
pub fn coordinated_turn_noise(alpha: f64, ts: f64) -> DMatrix<f64> {
    let wt = alpha * ts;
    let (s, c) = wt.sin_cos();
    let a2 = alpha * alpha;
    let p = 2.0 * (wt - s) / (a2 * alpha);
    let pv = (1.0 - c) / a2;
    let x = (wt - s) / a2;
    DMatrix::from_row_slice(4, 4, &[p, pv, 0.0, x, pv, ts, -x, 0.0, 0.0, -x, p, pv, x, 0.0, pv, ts])
}

/// Ground truth and measurements of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0 … x_K`.
    pub states: Vec<DVector<f64>>,
    /// `z_0 … z_K`.
    pub measurements: Vec<f64>,
}

/// Samples `x_0` from the prior and rolls the dynamics forward `steps` times,
/// measuring terrain at every state.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    dynamics: &LtiDynamics,
    init: &InitialCondition,
    measurement: &TerrainMeasurement,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let n = dynamics.dim();
    if init.mean.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: init.mean.len() });
    }
    let model = dynamics.discrete_equivalent();
    let noise_factor = linalg::psd_factor(&model.noise)?;
    let mut x = init.sample(rng);
    let mut states = Vec::with_capacity(steps + 1);
    let mut measurements = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        measurements.push(measurement.sample(x.as_slice(), rng)?);
        if k < steps {
            let w = &noise_factor * standard_normal(n, rng);
            let next = &model.transition * &x + &model.input + w;
            states.push(core::mem::replace(&mut x, next));
        }
    }
    states.push(x);
    Ok(Trajectory { states, measurements })
}
