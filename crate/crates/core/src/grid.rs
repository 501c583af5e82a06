//! Structured grids and the piecewise-constant point-mass density.
//!
//! A grid is an axis-aligned rectilinear lattice in a pre-image space mapped
//! to the state space by an affine map `x = offset + basis · p`. Moving a grid
//! through linear dynamics only changes the affine map, so the lattice stays
//! axis-aligned in pre-image coordinates and interpolation never needs a
//! scattered-data method.
//!
//! Points are enumerated column-major: the first axis varies fastest. The
//! tensor views returned by [`reshape_to_physical`] use the same order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayD, IxDyn, ShapeBuilder};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg;

/// Points whose fractional lattice index is this far outside the hull still
/// count as inside; absorbs rounding in the affine maps.
const HULL_TOL: f64 = 1e-9;

/// Tolerance on `δ Σ w` for a density to count as normalised.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// First two moments of a state density.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    counts: Vec<usize>,
    steps: Vec<f64>,
    basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
    offset: DVector<f64>,
}

impl Grid {
    /// Builds a grid from per-axis counts and spacings, a basis and the
    /// state-space position of the centre point.
    pub fn new(counts: Vec<usize>, steps: Vec<f64>, basis: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        if steps.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: steps.len() });
        }
        if offset.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: offset.len() });
        }
        linalg::require_square(&basis, n)?;
        if let Some(&c) = counts.iter().find(|&&c| c % 2 == 0) {
            return Err(Error::InvalidArgument(format!("axis counts must be odd, got {c}")));
        }
        if let Some(&s) = steps.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("axis steps must be positive, got {s}")));
        }
        let basis_inv = linalg::inverse(&basis)?;
        Ok(Self { counts, steps, basis, basis_inv, offset })
    }

    /// Axis-aligned grid (identity basis) centred on `center`.
    pub fn axis_aligned(center: DVector<f64>, steps: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let n = center.len();
        Self::new(counts, steps, DMatrix::identity(n, n), center)
    }

    /// Axis-aligned grid centred on `mean` spanning `±sigma_mult·sqrt(cov_ii)`
    /// along each axis.
    pub fn from_moments(mean: &DVector<f64>, cov: &DMatrix<f64>, sigma_mult: f64, counts: &[usize]) -> Result<Self> {
        let n = mean.len();
        if counts.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: counts.len() });
        }
        linalg::require_square(cov, n)?;
        if !(sigma_mult > 0.0 && sigma_mult.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_mult must be positive, got {sigma_mult}")));
        }
        if let Some(&c) = counts.iter().find(|&&c| c % 2 == 0) {
            return Err(Error::InvalidArgument(format!("axis counts must be odd, got {c}")));
        }
        linalg::cholesky_lower(cov)?;
        let steps = (0..n)
            .map(|i| {
                let span = 2.0 * sigma_mult * cov[(i, i)].sqrt();
                span / (counts[i].max(2) - 1) as f64
            })
            .collect();
        Self::axis_aligned(mean.clone(), steps, counts.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Total number of points.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_inverse(&self) -> &DMatrix<f64> {
        &self.basis_inv
    }

    /// State-space position of the centre point.
    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    /// Volume `δ` of one point's neighbourhood in state space.
    pub fn cell_volume(&self) -> f64 {
        let lattice: f64 = self.steps.iter().product();
        lattice * self.basis.determinant().abs()
    }

    /// Computational index of the centre point (`⌈N/2⌉` counted from one).
    pub fn center_index(&self) -> usize {
        (self.len() - 1) / 2
    }

    pub fn is_axis_aligned(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.basis[(i, j)] == 0.0))
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&c| {
                let r = i % c;
                i /= c;
                r
            })
            .collect()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).rev().fold(0, |acc, (&k, &c)| acc * c + k)
    }

    /// Pre-image coordinate of index `k` along `axis`.
    pub fn lattice_coord(&self, axis: usize, k: usize) -> f64 {
        (k as f64 - ((self.counts[axis] - 1) / 2) as f64) * self.steps[axis]
    }

    /// Pre-image coordinates of point `i`.
    pub fn lattice_point(&self, i: usize) -> DVector<f64> {
        let idx = self.multi_index(i);
        DVector::from_iterator(self.dim(), idx.iter().enumerate().map(|(a, &k)| self.lattice_coord(a, k)))
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        &self.offset + &self.basis * self.lattice_point(i)
    }

    /// All points as columns of an `n × N` matrix.
    pub fn points(&self) -> DMatrix<f64> {
        let n = self.dim();
        let total = self.len();
        let mut out = DMatrix::zeros(n, total);
        let mut idx = vec![0usize; n];
        let mut lat = vec![0.0; n];
        for a in 0..n {
            lat[a] = self.lattice_coord(a, 0);
        }
        for j in 0..total {
            for r in 0..n {
                let mut v = self.offset[r];
                for (c, &l) in lat.iter().enumerate() {
                    v += self.basis[(r, c)] * l;
                }
                out[(r, j)] = v;
            }
            // advance the column-major counter
            for a in 0..n {
                idx[a] += 1;
                if idx[a] < self.counts[a] {
                    lat[a] = self.lattice_coord(a, idx[a]);
                    break;
                }
                idx[a] = 0;
                lat[a] = self.lattice_coord(a, 0);
            }
        }
        out
    }

    pub fn to_preimage(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis_inv * (x - &self.offset)
    }

    /// Image of the grid under `x ↦ F x + u`: point `i` of the result is
    /// `F · point_i + u`.
    pub fn moved(&self, f: &DMatrix<f64>, u: &DVector<f64>) -> Result<Self> {
        let n = self.dim();
        linalg::require_square(f, n)?;
        if u.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: u.len() });
        }
        Self::new(self.counts.clone(), self.steps.clone(), f * &self.basis, f * &self.offset + u)
    }

    /// Whether both grids enumerate the same points within `tol` (relative to
    /// the spacing).
    pub fn same_points(&self, other: &Grid, tol: f64) -> bool {
        if self.counts != other.counts {
            return false;
        }
        let n = self.dim();
        let scale_b = |g: &Grid| DMatrix::from_fn(n, n, |r, c| g.basis[(r, c)] * g.steps[c]);
        let a = scale_b(self);
        let b = scale_b(other);
        let unit = a.amax().max(b.amax());
        (&a - &b).amax() <= tol * unit && (&self.offset - &other.offset).amax() <= tol * unit
    }
}

/// Builds an axis-aligned grid around a Gaussian's moments.
pub fn build_grid_from_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    sigma_mult: f64,
    counts: &[usize],
) -> Result<Grid> {
    Grid::from_moments(mean, cov, sigma_mult, counts)
}

pub fn move_grid(grid: &Grid, f: &DMatrix<f64>, u: &DVector<f64>) -> Result<Grid> {
    grid.moved(f, u)
}

/// Views a weight vector as a column-major tensor of shape `grid.counts()`.
pub fn reshape_to_physical(weights: &[f64], grid: &Grid) -> Result<ArrayD<f64>> {
    if weights.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), actual: weights.len() });
    }
    ArrayD::from_shape_vec(IxDyn(grid.counts()).f(), weights.to_vec())
        .map_err(|e| Error::InvalidArgument(format!("{e}")))
}

/// Inverse of [`reshape_to_physical`]; accepts tensors in any memory order.
pub fn reshape_to_computational(tensor: &ArrayD<f64>) -> Vec<f64> {
    tensor.t().iter().copied().collect()
}

/// Piecewise-constant density: weight `w_i` is the density value over the
/// cell of volume `δ` around point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassDensity {
    grid: Grid,
    weights: Vec<f64>,
}

impl PointMassDensity {
    pub fn new(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: weights.len() });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("weights must be finite and non-negative, got {w}")));
        }
        Ok(Self { grid, weights })
    }

    /// Samples a Gaussian density at the grid points and normalises.
    pub fn gaussian(grid: Grid, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let g = linalg::GaussianDensity::new(cov)?;
        let pts = grid.points();
        let mut d = vec![0.0; grid.dim()];
        let weights = pts
            .column_iter()
            .map(|p| {
                for (k, v) in d.iter_mut().enumerate() {
                    *v = p[k] - mean[k];
                }
                g.density_slice(&d)
            })
            .collect();
        Self::new(grid, weights)?.normalized()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_parts(self) -> (Grid, Vec<f64>) {
        (self.grid, self.weights)
    }

    pub fn delta(&self) -> f64 {
        self.grid.cell_volume()
    }

    /// Total probability mass `δ Σ w`.
    pub fn mass(&self) -> f64 {
        self.delta() * self.weights.iter().sum::<f64>()
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= NORMALIZATION_TOL
    }

    pub fn normalize(&mut self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        let mass = sum * self.delta();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::DegenerateDensity(sum));
        }
        let scale = 1.0 / mass;
        self.weights.iter_mut().for_each(|w| *w *= scale);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Mean and covariance; the density must already be normalised.
    pub fn moments(&self) -> Result<Estimate> {
        let mass = self.mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidState(format!("density mass is {mass}, expected 1")));
        }
        let n = self.grid.dim();
        let delta = self.delta();
        // accumulate in pre-image coordinates, then map: keeps large offsets
        // out of the sums
        let mut m1 = DVector::zeros(n);
        let mut m2 = DMatrix::zeros(n, n);
        let mut idx = vec![0usize; n];
        let mut lat = vec![0.0; n];
        for a in 0..n {
            lat[a] = self.grid.lattice_coord(a, 0);
        }
        for &w in &self.weights {
            if w != 0.0 {
                for r in 0..n {
                    m1[r] += w * lat[r];
                    for c in 0..=r {
                        m2[(r, c)] += w * lat[r] * lat[c];
                    }
                }
            }
            for a in 0..n {
                idx[a] += 1;
                if idx[a] < self.grid.counts[a] {
                    lat[a] = self.grid.lattice_coord(a, idx[a]);
                    break;
                }
                idx[a] = 0;
                lat[a] = self.grid.lattice_coord(a, 0);
            }
        }
        m1 *= delta;
        m2 *= delta;
        for r in 0..n {
            for c in 0..r {
                m2[(c, r)] = m2[(r, c)];
            }
        }
        let cov_lat = &m2 - &m1 * m1.transpose();
        let b = &self.grid.basis;
        let mean = &self.grid.offset + b * &m1;
        let cov = b * cov_lat * b.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Estimate { mean, cov })
    }

    /// Multilinear interpolation of the weights at the points of `target`,
    /// carried out in this grid's pre-image space. Points outside the hull get
    /// zero. The result is not renormalised.
    pub fn interpolate_values(&self, target: &Grid) -> Result<Vec<f64>> {
        let n = self.grid.dim();
        if target.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: target.dim() });
        }
        let src = &self.grid;
        // pre-image of target lattice point t: M t + c0
        let m = &src.basis_inv * &target.basis;
        let c0 = &src.basis_inv * (&target.offset - &src.offset);
        let strides = crate::transform::strides(&src.counts);

        let total = target.len();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        let mut lat = vec![0.0; n];
        for a in 0..n {
            lat[a] = target.lattice_coord(a, 0);
        }
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        let corners = 1usize << n;
        'points: for _ in 0..total {
            let mut inside = true;
            for r in 0..n {
                let mut p = c0[r];
                for (c, &l) in lat.iter().enumerate() {
                    p += m[(r, c)] * l;
                }
                let half = ((src.counts[r] - 1) / 2) as f64;
                let t = p / src.steps[r] + half;
                let hi = (src.counts[r] - 1) as f64;
                if t < -HULL_TOL || t > hi + HULL_TOL {
                    inside = false;
                    break;
                }
                let t = t.clamp(0.0, hi);
                let i0 = if src.counts[r] == 1 { 0 } else { (t.floor() as usize).min(src.counts[r] - 2) };
                base[r] = i0;
                frac[r] = t - i0 as f64;
            }
            let value = if inside {
                let mut acc = 0.0;
                for corner in 0..corners {
                    let mut coef = 1.0;
                    let mut lin = 0;
                    for a in 0..n {
                        if corner >> a & 1 == 1 {
                            if frac[a] == 0.0 {
                                coef = 0.0;
                                break;
                            }
                            coef *= frac[a];
                            lin += (base[a] + 1) * strides[a];
                        } else {
                            coef *= 1.0 - frac[a];
                            lin += base[a] * strides[a];
                        }
                    }
                    if coef != 0.0 {
                        acc += coef * self.weights[lin];
                    }
                }
                acc
            } else {
                0.0
            };
            out.push(value);

            for a in 0..n {
                idx[a] += 1;
                if idx[a] < target.counts[a] {
                    lat[a] = target.lattice_coord(a, idx[a]);
                    continue 'points;
                }
                idx[a] = 0;
                lat[a] = target.lattice_coord(a, 0);
            }
        }
        Ok(out)
    }

    /// Transfers the density onto `target` and renormalises.
    pub fn interpolate(&self, target: &Grid) -> Result<Self> {
        let values = self.interpolate_values(target)?;
        Self::new(target.clone(), values)?.normalized()
    }

    pub fn to_physical(&self) -> ArrayD<f64> {
        ArrayD::from_shape_vec(IxDyn(self.grid.counts()).f(), self.weights.clone())
            .expect("weights length matches grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn moments_grid_axis_points() {
        let g = Grid::from_moments(&dv(&[0.0, 0.0]), &DMatrix::identity(2, 2), 3.0, &[5, 5]).unwrap();
        let axis: Vec<f64> = (0..5).map(|k| g.lattice_coord(0, k)).collect();
        assert_eq!(axis, vec![-3.0, -1.5, 0.0, 1.5, 3.0]);
        assert_eq!(g.point(g.center_index()), dv(&[0.0, 0.0]));
    }

    #[test]
    fn moments_grid_paper_prior() {
        let mean = dv(&[36569.0, 55581.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[160.0, 20.0, 20.0, 90.0]);
        let g = Grid::from_moments(&mean, &cov, 4.0, &[41, 41]).unwrap();
        assert_eq!(g.point(g.center_index()), mean);
        let last = g.point(g.len() - 1);
        assert_relative_eq!(last[0] - mean[0], 4.0 * 160f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn even_count_rejected() {
        let r = Grid::from_moments(&dv(&[0.0, 0.0]), &DMatrix::identity(2, 2), 3.0, &[4, 5]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_spd_cov_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let r = Grid::from_moments(&dv(&[0.0, 0.0]), &cov, 3.0, &[5, 5]);
        assert!(matches!(r, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn move_identity_and_shift() {
        let g = Grid::from_moments(&dv(&[1.0, 2.0]), &DMatrix::identity(2, 2), 3.0, &[3, 5]).unwrap();
        let same = g.moved(&DMatrix::identity(2, 2), &DVector::zeros(2)).unwrap();
        assert_eq!(same, g);
        let shifted = g.moved(&DMatrix::identity(2, 2), &dv(&[50.0, 50.0])).unwrap();
        for i in 0..g.len() {
            assert_relative_eq!(shifted.point(i), g.point(i) + dv(&[50.0, 50.0]), epsilon = 1e-12);
        }
    }

    #[test]
    fn move_singular_rejected() {
        let g = Grid::from_moments(&dv(&[0.0, 0.0]), &DMatrix::identity(2, 2), 3.0, &[3, 3]).unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(g.moved(&f, &DVector::zeros(2)), Err(Error::SingularDynamics));
    }

    #[test]
    fn reshape_layout_is_column_major() {
        let g = Grid::axis_aligned(dv(&[0.0, 0.0]), vec![1.0, 1.0], vec![3, 3]).unwrap();
        let w: Vec<f64> = (1..=9).map(f64::from).collect();
        let t = reshape_to_physical(&w, &g).unwrap();
        // element (i, j) holds index i + 3 j
        for j in 0..3 {
            for i in 0..3 {
                assert_eq!(t[[i, j].as_slice()], (1 + i + 3 * j) as f64);
            }
        }
        assert_eq!(reshape_to_computational(&t), w);
    }

    #[test]
    fn reshape_non_square_round_trip() {
        // two-by-three lattice; counts must be odd, so use 1x3 and 3x1 shapes too
        for counts in [vec![1, 3], vec![3, 1], vec![3, 5, 1]] {
            let g = Grid::axis_aligned(DVector::zeros(counts.len()), vec![1.0; counts.len()], counts.clone()).unwrap();
            let w: Vec<f64> = (0..g.len()).map(|i| i as f64 * 0.5).collect();
            let t = reshape_to_physical(&w, &g).unwrap();
            assert_eq!(t.shape(), counts.as_slice());
            assert_eq!(reshape_to_computational(&t), w);
        }
    }

    #[test]
    fn reshape_length_mismatch() {
        let g = Grid::axis_aligned(dv(&[0.0]), vec![1.0], vec![3]).unwrap();
        assert!(matches!(reshape_to_physical(&[1.0, 2.0], &g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn center_one_hot_maps_to_center() {
        let g = Grid::axis_aligned(dv(&[0.0, 0.0]), vec![1.0, 1.0], vec![5, 3]).unwrap();
        let mut w = vec![0.0; g.len()];
        w[g.center_index()] = 1.0;
        let t = reshape_to_physical(&w, &g).unwrap();
        assert_eq!(t[[2, 1].as_slice()], 1.0);
        assert_eq!(t.sum(), 1.0);
    }

    #[test]
    fn normalize_cases() {
        let g = Grid::axis_aligned(dv(&[0.0]), vec![0.5], vec![3]).unwrap();
        let p = PointMassDensity::new(g.clone(), vec![4.0, 0.0, 0.0]).unwrap().normalized().unwrap();
        assert_eq!(p.weights(), &[2.0, 0.0, 0.0]);

        let u = PointMassDensity::new(g.clone(), vec![7.0; 3]).unwrap().normalized().unwrap();
        for &w in u.weights() {
            assert_relative_eq!(w, 1.0 / (3.0 * 0.5), max_relative = 1e-15);
        }
        let again = u.clone().normalized().unwrap();
        for (a, b) in again.weights().iter().zip(u.weights()) {
            assert!((a - b).abs() <= 1e-15);
        }
        let zero = PointMassDensity::new(g, vec![0.0; 3]).unwrap().normalized();
        assert!(matches!(zero, Err(Error::DegenerateDensity(_))));
    }

    #[test]
    fn moments_of_degenerate_and_symmetric() {
        let g = Grid::axis_aligned(dv(&[10.0, -4.0]), vec![2.0, 1.0], vec![5, 3]).unwrap();
        let mut w = vec![0.0; g.len()];
        w[7] = 1.0;
        let p = PointMassDensity::new(g.clone(), w).unwrap().normalized().unwrap();
        let e = p.moments().unwrap();
        assert_relative_eq!(e.mean, g.point(7), epsilon = 1e-12);
        assert!(e.cov.amax() < 1e-12);

        let g1 = Grid::axis_aligned(dv(&[0.0]), vec![3.0], vec![3]).unwrap();
        let p = PointMassDensity::new(g1, vec![1.0, 0.0, 1.0]).unwrap().normalized().unwrap();
        let e = p.moments().unwrap();
        assert!(e.mean[0].abs() < 1e-15);
        assert_relative_eq!(e.cov[(0, 0)], 9.0, max_relative = 1e-14);
    }

    #[test]
    fn moments_require_normalization() {
        let g = Grid::axis_aligned(dv(&[0.0]), vec![1.0], vec![3]).unwrap();
        let p = PointMassDensity::new(g, vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(p.moments(), Err(Error::InvalidState(_))));
    }

    #[test]
    fn gaussian_moments_recovered() {
        let mean = dv(&[3.0, -2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 1.2, 1.2, 2.0]);
        let g = Grid::from_moments(&mean, &cov, 4.0, &[101, 101]).unwrap();
        let p = PointMassDensity::gaussian(g, &mean, &cov).unwrap();
        let e = p.moments().unwrap();
        for i in 0..2 {
            assert!((e.mean[i] - mean[i]).abs() < 0.01 * cov[(i, i)].sqrt());
            for j in 0..2 {
                assert!((e.cov[(i, j)] - cov[(i, j)]).abs() < 0.01 * cov[(i, i)]);
            }
        }
    }

    #[test]
    fn interpolate_identity_and_constants() {
        let g = Grid::axis_aligned(dv(&[0.0, 0.0]), vec![1.0, 2.0], vec![5, 7]).unwrap();
        let w: Vec<f64> = (0..g.len()).map(|i| 1.0 + (i % 4) as f64).collect();
        let p = PointMassDensity::new(g.clone(), w).unwrap().normalized().unwrap();
        let q = p.interpolate(&g).unwrap();
        for (a, b) in q.weights().iter().zip(p.weights()) {
            assert_relative_eq!(a, b, max_relative = 1e-13);
        }

        let c = PointMassDensity::new(g.clone(), vec![2.5; g.len()]).unwrap();
        let inner = Grid::axis_aligned(dv(&[0.3, -0.7]), vec![0.4, 0.9], vec![5, 5]).unwrap();
        for v in c.interpolate_values(&inner).unwrap() {
            assert_relative_eq!(v, 2.5, max_relative = 1e-14);
        }
    }

    #[test]
    fn interpolate_reproduces_affine_functions() {
        // rhomboid source grid, axis-aligned target inside its hull
        let basis = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.3, 1.2]);
        let src = Grid::new(vec![9, 9], vec![0.5, 0.5], basis, dv(&[1.0, 2.0])).unwrap();
        let f = |x: &DVector<f64>| 5.0 + 0.3 * x[0] - 0.2 * x[1];
        let w: Vec<f64> = (0..src.len()).map(|i| f(&src.point(i))).collect();
        let p = PointMassDensity::new(src, w).unwrap();
        let target = Grid::axis_aligned(dv(&[1.1, 1.9]), vec![0.25, 0.25], vec![7, 5]).unwrap();
        let v = p.interpolate_values(&target).unwrap();
        for (i, vi) in v.iter().enumerate() {
            assert_relative_eq!(*vi, f(&target.point(i)), max_relative = 1e-12);
        }
    }

    #[test]
    fn interpolate_outside_hull_is_zero() {
        let g = Grid::axis_aligned(dv(&[0.0]), vec![1.0], vec![3]).unwrap();
        let p = PointMassDensity::new(g, vec![1.0, 1.0, 1.0]).unwrap();
        let far = Grid::axis_aligned(dv(&[10.0]), vec![1.0], vec![3]).unwrap();
        assert_eq!(p.interpolate_values(&far).unwrap(), vec![0.0; 3]);
        assert!(matches!(p.interpolate(&far), Err(Error::DegenerateDensity(_))));
        let wrong = Grid::axis_aligned(dv(&[0.0, 0.0]), vec![1.0, 1.0], vec![3, 3]).unwrap();
        assert!(matches!(p.interpolate(&wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cell_volume_includes_basis_determinant() {
        let basis = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 3.0]);
        let g = Grid::new(vec![3, 3], vec![0.5, 2.0], basis, dv(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(g.cell_volume(), 0.5 * 2.0 * 6.0);
    }

    #[test]
    fn points_matrix_matches_point() {
        let basis = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 0.1, 0.3, 0.0, 1.0]);
        let g = Grid::new(vec![3, 5, 1], vec![0.5, 0.25, 1.0], basis, dv(&[1.0, 2.0, 3.0])).unwrap();
        let pts = g.points();
        for i in 0..g.len() {
            assert_relative_eq!(pts.column(i).into_owned(), g.point(i), epsilon = 1e-14);
            assert_eq!(g.linear_index(&g.multi_index(i)), i);
        }
    }
}
