//! Convolution form of the prediction on a moved grid.
//!
//! When the destination grid is the image of the source grid under the
//! dynamics, the transition density between points depends only on the
//! lattice offset `d = j - i`, so `w'_j = δ Σ_i K(j - i) w_i`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, PointMassDensity};
use crate::linalg::GaussianDensity;
use crate::models::DiscreteModel;
use crate::transform::{Direction, fft_nd, next_fast_len, strides};

/// How many lattice offsets the kernel stores per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelExtent {
    /// Offsets `±(N - 1)`: every entry of the transition matrix, so the
    /// convolution reproduces the dense product exactly.
    #[default]
    Full,
    /// Offsets `±(N - 1)/2`: the middle row of the transition matrix.
    /// Truncates transitions longer than half the grid.
    MiddleRow,
}

/// Transition densities indexed by lattice offset.
///
/// Stored column-major with shape `2h + 1` per axis; offset `d` sits at
/// index `d + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    half: Vec<usize>,
    values: Vec<f64>,
}

impl ConvKernel {
    pub fn new(half: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let len: usize = half.iter().map(|h| 2 * h + 1).product();
        if values.len() != len {
            return Err(Error::DimensionMismatch { expected: len, actual: values.len() });
        }
        Ok(Self { half, values })
    }

    /// Kernel that leaves weights unchanged (up to the cell volume).
    pub fn delta(half: Vec<usize>, cell_volume: f64) -> Self {
        let shape: Vec<usize> = half.iter().map(|h| 2 * h + 1).collect();
        let len: usize = shape.iter().product();
        let mut values = vec![0.0; len];
        values[(len - 1) / 2] = 1.0 / cell_volume;
        Self { half, values }
    }

    pub fn half(&self) -> &[usize] {
        &self.half
    }

    pub fn shape(&self) -> Vec<usize> {
        self.half.iter().map(|h| 2 * h + 1).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at lattice offset `d`; zero outside the stored extent.
    pub fn at(&self, d: &[isize]) -> f64 {
        let shape = self.shape();
        let st = strides(&shape);
        let mut lin = 0;
        for a in 0..d.len() {
            let k = d[a] + self.half[a] as isize;
            if k < 0 || k as usize >= shape[a] {
                return 0.0;
            }
            lin += k as usize * st[a];
        }
        self.values[lin]
    }
}

/// Checks that `destination` is `source` moved through the model.
pub fn require_moved(source: &Grid, destination: &Grid, model: &DiscreteModel) -> Result<()> {
    let expected = source.moved(&model.transition, &model.input)?;
    if destination.same_points(&expected, 1e-9) { Ok(()) } else { Err(Error::MisalignedGrids) }
}

/// Kernel `K(d) = N(B (d ∘ Δ); 0, Q)` of a discrete model, where `B` is the
/// destination basis.
pub fn transition_kernel_dd(
    source: &Grid,
    destination: &Grid,
    model: &DiscreteModel,
    extent: KernelExtent,
) -> Result<ConvKernel> {
    require_moved(source, destination, model)?;
    let gauss = GaussianDensity::new(&model.noise)?;
    let n = source.dim();
    let half: Vec<usize> = source
        .counts()
        .iter()
        .map(|&c| match extent {
            KernelExtent::Full => c - 1,
            KernelExtent::MiddleRow => (c - 1) / 2,
        })
        .collect();
    let shape: Vec<usize> = half.iter().map(|h| 2 * h + 1).collect();
    let len: usize = shape.iter().product();
    let basis = destination.basis();
    let steps = destination.steps();
    let mut values = Vec::with_capacity(len);
    let mut idx = vec![0usize; n];
    let mut lat = vec![0.0; n];
    let mut dev = vec![0.0; n];
    for _ in 0..len {
        for a in 0..n {
            lat[a] = (idx[a] as f64 - half[a] as f64) * steps[a];
        }
        for r in 0..n {
            dev[r] = (0..n).map(|c| basis[(r, c)] * lat[c]).sum();
        }
        values.push(gauss.density_slice(&dev));
        advance(&mut idx, &shape);
    }
    Ok(ConvKernel { half, values })
}

/// The middle row of the transition matrix, reshaped to the grid.
pub fn middle_row_dd(source: &Grid, destination: &Grid, model: &DiscreteModel) -> Result<ConvKernel> {
    transition_kernel_dd(source, destination, model, KernelExtent::MiddleRow)
}

fn advance(idx: &mut [usize], shape: &[usize]) {
    for a in 0..idx.len() {
        idx[a] += 1;
        if idx[a] < shape[a] {
            return;
        }
        idx[a] = 0;
    }
}

/// `y_j = Σ_i K(j - i) w_i` for `j, i` on a grid of the given shape.
///
/// The kernel and the weights share one complex FFT (kernel in the real part,
/// weights in the imaginary part) and are separated by conjugate symmetry,
/// so the whole convolution takes one forward and one inverse transform.
pub fn fft_convolve(weights: &[f64], shape: &[usize], kernel: &ConvKernel) -> Result<Vec<f64>> {
    let n = shape.len();
    if kernel.half.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: kernel.half.len() });
    }
    let total: usize = shape.iter().product();
    if weights.len() != total {
        return Err(Error::DimensionMismatch { expected: total, actual: weights.len() });
    }
    // circular size large enough that no wrapped term reaches j ∈ [0, N)
    let lens: Vec<usize> = (0..n)
        .map(|a| {
            let h = kernel.half[a];
            next_fast_len((shape[a] + h).max(2 * h + 1))
        })
        .collect();
    let st = strides(&lens);
    let big: usize = lens.iter().product();
    let mut buf = vec![Complex64::new(0.0, 0.0); big];

    let kshape = kernel.shape();
    let mut idx = vec![0usize; n];
    for &v in &kernel.values {
        let mut lin = 0;
        for a in 0..n {
            let d = idx[a] as isize - kernel.half[a] as isize;
            lin += d.rem_euclid(lens[a] as isize) as usize * st[a];
        }
        buf[lin].re = v;
        advance(&mut idx, &kshape);
    }
    idx.iter_mut().for_each(|v| *v = 0);
    for &w in weights {
        let lin: usize = (0..n).map(|a| idx[a] * st[a]).sum();
        buf[lin].im = w;
        advance(&mut idx, shape);
    }

    fft_nd(&mut buf, &lens, Direction::Forward);

    let mut prod = vec![Complex64::new(0.0, 0.0); big];
    idx.iter_mut().for_each(|v| *v = 0);
    let half_i = Complex64::new(0.0, -0.5);
    for (f, p) in prod.iter_mut().enumerate() {
        let mirror: usize = (0..n).map(|a| ((lens[a] - idx[a]) % lens[a]) * st[a]).sum();
        let z = buf[f];
        let zc = buf[mirror].conj();
        let k_hat = (z + zc) * 0.5;
        let w_hat = (z - zc) * half_i;
        *p = k_hat * w_hat;
        advance(&mut idx, &lens);
    }
    drop(buf);

    fft_nd(&mut prod, &lens, Direction::Inverse);
    let scale = 1.0 / big as f64;
    let mut out = Vec::with_capacity(total);
    idx.iter_mut().for_each(|v| *v = 0);
    for _ in 0..total {
        let lin: usize = (0..n).map(|a| idx[a] * st[a]).sum();
        out.push(prod[lin].re * scale);
        advance(&mut idx, shape);
    }
    Ok(out)
}

/// Convolution prediction onto `destination`, scaled by the source cell
/// volume and renormalised.
pub fn fft_time_update(pmd: &PointMassDensity, destination: &Grid, kernel: &ConvKernel) -> Result<PointMassDensity> {
    let raw = fft_propagate_with(pmd, destination, kernel)?;
    PointMassDensity::new(destination.clone(), raw)?.normalized()
}

/// Unnormalised convolution prediction `δ · (K * w)`.
pub fn fft_propagate_with(pmd: &PointMassDensity, destination: &Grid, kernel: &ConvKernel) -> Result<Vec<f64>> {
    if destination.counts() != pmd.grid().counts() {
        return Err(Error::MisalignedGrids);
    }
    let delta = pmd.delta();
    let mut raw = fft_convolve(pmd.weights(), pmd.grid().counts(), kernel)?;
    // transform round-off can leave tiny negatives where the result is ~0
    raw.iter_mut().for_each(|v| *v = (*v * delta).max(0.0));
    Ok(raw)
}

/// Builds the kernel of a discrete model and applies it.
pub fn fft_propagate(
    pmd: &PointMassDensity,
    destination: &Grid,
    model: &DiscreteModel,
    extent: KernelExtent,
) -> Result<Vec<f64>> {
    let kernel = transition_kernel_dd(pmd.grid(), destination, model, extent)?;
    fft_propagate_with(pmd, destination, &kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::make_random_walk;
    use crate::pmf::build_dense_tpm;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn direct(weights: &[f64], shape: &[usize], k: &ConvKernel) -> Vec<f64> {
        let total: usize = shape.iter().product();
        let multi = |mut i: usize| -> Vec<isize> {
            shape
                .iter()
                .map(|&s| {
                    let v = i % s;
                    i /= s;
                    v as isize
                })
                .collect()
        };
        (0..total)
            .map(|j| {
                let mj = multi(j);
                (0..total)
                    .map(|i| {
                        let mi = multi(i);
                        let d: Vec<isize> = mj.iter().zip(&mi).map(|(a, b)| a - b).collect();
                        k.at(&d) * weights[i]
                    })
                    .sum()
            })
            .collect()
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64) / ((1u64 << 53) as f64)
            })
            .collect()
    }

    #[test]
    fn convolution_matches_direct_sum() {
        for (shape, half) in [
            (vec![7usize], vec![3usize]),
            (vec![9], vec![8]),
            (vec![5, 3], vec![4, 2]),
            (vec![3, 5, 3], vec![1, 2, 2]),
            (vec![5, 5], vec![1, 3]),
        ] {
            let total: usize = shape.iter().product();
            let klen: usize = half.iter().map(|h| 2 * h + 1).product();
            let k = ConvKernel::new(half.clone(), pseudo(klen, 3)).unwrap();
            let w = pseudo(total, 7);
            let fast = fft_convolve(&w, &shape, &k).unwrap();
            let slow = direct(&w, &shape, &k);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{shape:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let grid = Grid::axis_aligned(DVector::zeros(2), vec![0.3, 0.2], vec![7, 5]).unwrap();
        let w = pseudo(35, 1);
        let pmd = PointMassDensity::new(grid.clone(), w).unwrap().normalized().unwrap();
        let k = ConvKernel::delta(vec![3, 2], grid.cell_volume());
        let out = fft_time_update(&pmd, &grid, &k).unwrap();
        for (a, b) in out.weights().iter().zip(pmd.weights()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn isotropic_kernel_is_separable_and_peaked() {
        let model = DiscreteModel {
            transition: DMatrix::identity(2, 2),
            input: DVector::zeros(2),
            noise: DMatrix::identity(2, 2) * 2.0,
        };
        let src = Grid::axis_aligned(DVector::zeros(2), vec![1.0, 1.0], vec![7, 7]).unwrap();
        let k = middle_row_dd(&src, &src, &model).unwrap();
        let peak = k.at(&[0, 0]);
        assert_eq!(k.values().iter().cloned().fold(0.0, f64::max), peak);
        for i in -3..=3isize {
            for j in -3..=3isize {
                assert_relative_eq!(k.at(&[i, j]) * peak, k.at(&[i, 0]) * k.at(&[0, j]), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn middle_row_matches_dense_row() {
        let model = DiscreteModel {
            transition: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.8]),
            input: DVector::from_vec(vec![0.5, 0.1]),
            noise: DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.3, 0.5]),
        };
        let src = Grid::axis_aligned(DVector::from_vec(vec![1.0, 2.0]), vec![0.4, 0.3], vec![5, 5]).unwrap();
        let dst = src.moved(&model.transition, &model.input).unwrap();
        let tpm = build_dense_tpm(&src, &dst, &model).unwrap();
        let k = middle_row_dd(&src, &dst, &model).unwrap();
        let m = src.center_index();
        let mm = src.multi_index(m);
        for i in 0..src.len() {
            let mi = src.multi_index(i);
            let d: Vec<isize> = (0..2).map(|a| mm[a] as isize - mi[a] as isize).collect();
            assert!((tpm.values[(m, i)] - k.at(&d)).abs() < 1e-14);
        }
    }

    #[test]
    fn full_kernel_reproduces_dense_product() {
        let model = make_random_walk().0.discrete_equivalent();
        let src = Grid::axis_aligned(DVector::from_vec(vec![10.0, 20.0]), vec![6.0, 5.0], vec![11, 9]).unwrap();
        let dst = src.moved(&model.transition, &model.input).unwrap();
        let pmd = PointMassDensity::new(src.clone(), pseudo(99, 5)).unwrap().normalized().unwrap();
        let tpm = build_dense_tpm(&src, &dst, &model).unwrap();
        let dense = (&tpm.values * DVector::from_column_slice(pmd.weights())) * pmd.delta();
        let fast = fft_propagate(&pmd, &dst, &model, KernelExtent::Full).unwrap();
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12 * dense.amax());
        }
    }

    #[test]
    fn kernel_mass_is_one_on_wide_grid() {
        let model = make_random_walk().0.discrete_equivalent();
        // ±6σ of the kernel on each side of the centre
        let src = Grid::axis_aligned(DVector::zeros(2), vec![2.0, 2.0], vec![61, 61]).unwrap();
        let dst = src.moved(&model.transition, &model.input).unwrap();
        let k = middle_row_dd(&src, &dst, &model).unwrap();
        let mass: f64 = k.values().iter().sum::<f64>() * src.cell_volume();
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn misaligned_destination_is_rejected() {
        let model = make_random_walk().0.discrete_equivalent();
        let src = Grid::axis_aligned(DVector::zeros(2), vec![1.0, 1.0], vec![5, 5]).unwrap();
        assert_eq!(middle_row_dd(&src, &src, &model).unwrap_err(), Error::MisalignedGrids);
    }
}
