//! Reference implementations used as oracles by the integration tests.
#![allow(dead_code)]

use epmf_core::epmf::FdmOperator;
use epmf_core::grid::Grid;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Dense explicit-step operator on a column-major grid of `counts`.
pub fn assemble_fdm(op: &FdmOperator, counts: &[usize]) -> DMatrix<f64> {
    let total: usize = counts.iter().product();
    let mut strides = Vec::new();
    let mut acc = 1;
    for &c in counts {
        strides.push(acc);
        acc *= c;
    }
    let mut d = DMatrix::from_diagonal_element(total, total, op.b);
    for i in 0..total {
        for (ax, &n) in counts.iter().enumerate() {
            let k = (i / strides[ax]) % n;
            if k > 0 {
                d[(i, i - strides[ax])] = op.a[ax];
            }
            if k + 1 < n {
                d[(i, i + strides[ax])] = op.a[ax];
            }
        }
    }
    d
}

/// Naive DST-I matrix `R[j][k] = sin(π (j+1)(k+1) / (N+1))`.
pub fn dst_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |j, k| (std::f64::consts::PI * ((j + 1) * (k + 1)) as f64 / (n as f64 + 1.0)).sin())
}

/// Multilinear interpolation of `weights` on `grid` at the state-space point
/// `x`, computed by solving for the pre-image directly.
pub fn multilinear_at(grid: &Grid, weights: &[f64], x: &DVector<f64>) -> f64 {
    let n = grid.dim();
    let p = grid.basis().clone().lu().solve(&(x - grid.offset())).unwrap();
    let mut lo = vec![0usize; n];
    let mut t = vec![0.0; n];
    for a in 0..n {
        let c = grid.counts()[a];
        let f = p[a] / grid.steps()[a] + ((c - 1) / 2) as f64;
        if f < -1e-9 || f > (c - 1) as f64 + 1e-9 {
            return 0.0;
        }
        let f = f.clamp(0.0, (c - 1) as f64);
        let i = if c == 1 { 0 } else { (f.floor() as usize).min(c - 2) };
        lo[a] = i;
        t[a] = f - i as f64;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << n) {
        let mut coef = 1.0;
        let mut idx = lo.clone();
        for a in 0..n {
            if corner >> a & 1 == 1 {
                coef *= t[a];
                idx[a] += 1;
            } else {
                coef *= 1.0 - t[a];
            }
        }
        if coef != 0.0 {
            acc += coef * weights[grid.linear_index(&idx)];
        }
    }
    acc
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn spd(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    (prop::collection::vec(-1.0f64..1.0, n * n), prop::collection::vec(lo..hi, n)).prop_map(move |(m, eig)| {
        let q = DMatrix::from_vec(n, n, m).qr().q();
        let d = DMatrix::from_diagonal(&DVector::from_vec(eig));
        let s = &q * d * q.transpose();
        (&s + s.transpose()) * 0.5
    })
}

/// Random matrix with singular values bounded away from zero.
pub fn well_conditioned(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (
        prop::collection::vec(-1.0f64..1.0, n * n),
        prop::collection::vec(-1.0f64..1.0, n * n),
        prop::collection::vec(0.5f64..2.0, n),
    )
        .prop_map(move |(a, b, s)| {
            let u = DMatrix::from_vec(n, n, a).qr().q();
            let v = DMatrix::from_vec(n, n, b).qr().q();
            u * DMatrix::from_diagonal(&DVector::from_vec(s)) * v.transpose()
        })
}

/// Positive weights of length `len`.
pub fn positive_weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len)
}

/// Scalar linear-Gaussian measurement `z = c·x + v`, `v ~ N(0, r)`.
pub struct LinearGaussian {
    pub c: Vec<f64>,
    pub r: f64,
}

impl epmf_core::models::MeasurementModel for LinearGaussian {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn likelihood(&self, z: f64, state: &[f64]) -> epmf_core::Result<f64> {
        let h: f64 = self.c.iter().zip(state).map(|(a, b)| a * b).sum();
        let d = z - h;
        Ok((-0.5 * d * d / self.r).exp() / (2.0 * std::f64::consts::PI * self.r).sqrt())
    }
}

/// Kalman measurement update for [`LinearGaussian`].
pub fn kf_update(mean: &DVector<f64>, cov: &DMatrix<f64>, m: &LinearGaussian, z: f64) -> (DVector<f64>, DMatrix<f64>) {
    let c = DVector::from_column_slice(&m.c);
    let pc = cov * &c;
    let s = c.dot(&pc) + m.r;
    let k = &pc / s;
    let mean = mean + &k * (z - c.dot(mean));
    let cov = cov - &k * pc.transpose();
    (mean, (&cov + cov.transpose()) * 0.5)
}

/// `N(x; 0, q)` evaluated directly.
pub fn gaussian_pdf(x: &DVector<f64>, q: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let chol = q.clone().cholesky().expect("SPD covariance");
    let y = chol.solve(x);
    let det = q.determinant();
    (-0.5 * x.dot(&y)).exp() / ((2.0 * std::f64::consts::PI).powf(n) * det).sqrt()
}

/// Dense prediction `δ_src Σ_i N(ξ_dst(j); F ξ_src(i) + u, Q) w_i`.
pub fn dense_prediction(
    src: &Grid,
    dst: &Grid,
    weights: &[f64],
    f: &DMatrix<f64>,
    u: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Vec<f64> {
    let delta = src.cell_volume();
    (0..dst.len())
        .map(|j| {
            let y = dst.point(j);
            (0..src.len()).map(|i| gaussian_pdf(&(&y - f * src.point(i) - u), q) * weights[i]).sum::<f64>() * delta
        })
        .collect()
}
