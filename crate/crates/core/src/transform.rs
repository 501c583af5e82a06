//! Fast Fourier and sine transforms on column-major tensors.
//!
//! The FFT is a mixed-radix decimation-in-time transform with dedicated
//! butterflies for radices 2, 3, 4 and 5 and a generic butterfly for any other
//! prime factor, so its cost is `O(n · p_max)` where `p_max` is the largest
//! prime factor of the length. Convolution sizes are rounded up with
//! [`next_fast_len`] to keep `p_max <= 5`.
//!
//! The sine transform is the DST-I
//! `y[k] = Σ_{n=1..N} x[n] sin(π k n / (N + 1))`, i.e. multiplication by the
//! eigenvector matrix `R` of a constant tridiagonal operator with zero Dirichlet
//! boundaries. `R` is its own inverse up to the factor `2 / (N + 1)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A precomputed transform of a fixed length. The inverse is unnormalised.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    direction: Direction,
    /// (radix, remaining length) for each stage.
    stages: Vec<(usize, usize)>,
    twiddles: Vec<C>,
}

impl FftPlan {
    pub fn new(len: usize, direction: Direction) -> Self {
        assert!(len > 0, "FFT length must be non-zero");
        let sign = match direction {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        let twiddles = (0..len)
            .map(|k| {
                let phase = sign * 2.0 * PI * k as f64 / len as f64;
                C::new(phase.cos(), phase.sin())
            })
            .collect();
        Self { len, direction, stages: factorize(len), twiddles }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Transforms `buf` in place; `scratch` must hold at least `len` values.
    pub fn process(&self, buf: &mut [C], scratch: &mut [C]) {
        assert_eq!(buf.len(), self.len);
        if self.len == 1 {
            return;
        }
        let out = &mut scratch[..self.len];
        self.work(out, buf, 0, 1, 0);
        buf.copy_from_slice(out);
    }

    fn work(&self, out: &mut [C], input: &[C], offset: usize, fstride: usize, stage: usize) {
        let (p, m) = self.stages[stage];
        if m == 1 {
            for (q, o) in out.iter_mut().enumerate().take(p) {
                *o = input[offset + q * fstride];
            }
        } else {
            for q in 0..p {
                self.work(&mut out[q * m..(q + 1) * m], input, offset + q * fstride, fstride * p, stage + 1);
            }
        }
        match p {
            2 => self.bfly2(out, fstride, m),
            3 => self.bfly3(out, fstride, m),
            4 => self.bfly4(out, fstride, m),
            5 => self.bfly5(out, fstride, m),
            _ => self.bfly_generic(out, fstride, p, m),
        }
    }

    fn bfly2(&self, out: &mut [C], fstride: usize, m: usize) {
        let (lo, hi) = out.split_at_mut(m);
        for k in 0..m {
            let t = hi[k] * self.twiddles[k * fstride];
            hi[k] = lo[k] - t;
            lo[k] += t;
        }
    }

    fn bfly3(&self, out: &mut [C], fstride: usize, m: usize) {
        let epi3 = self.twiddles[fstride * m];
        for k in 0..m {
            let s1 = out[k + m] * self.twiddles[k * fstride];
            let s2 = out[k + 2 * m] * self.twiddles[2 * k * fstride];
            let s3 = s1 + s2;
            let s0 = (s1 - s2) * epi3.im;
            let mid = out[k] - s3 * 0.5;
            out[k] += s3;
            out[k + 2 * m] = C::new(mid.re + s0.im, mid.im - s0.re);
            out[k + m] = C::new(mid.re - s0.im, mid.im + s0.re);
        }
    }

    fn bfly4(&self, out: &mut [C], fstride: usize, m: usize) {
        let inverse = self.direction == Direction::Inverse;
        for k in 0..m {
            let s0 = out[k + m] * self.twiddles[k * fstride];
            let s1 = out[k + 2 * m] * self.twiddles[2 * k * fstride];
            let s2 = out[k + 3 * m] * self.twiddles[3 * k * fstride];
            let s5 = out[k] - s1;
            let f0 = out[k] + s1;
            let s3 = s0 + s2;
            let s4 = s0 - s2;
            out[k + 2 * m] = f0 - s3;
            out[k] = f0 + s3;
            if inverse {
                out[k + m] = C::new(s5.re - s4.im, s5.im + s4.re);
                out[k + 3 * m] = C::new(s5.re + s4.im, s5.im - s4.re);
            } else {
                out[k + m] = C::new(s5.re + s4.im, s5.im - s4.re);
                out[k + 3 * m] = C::new(s5.re - s4.im, s5.im + s4.re);
            }
        }
    }

    fn bfly5(&self, out: &mut [C], fstride: usize, m: usize) {
        let ya = self.twiddles[fstride * m];
        let yb = self.twiddles[fstride * 2 * m];
        let tw = &self.twiddles;
        for u in 0..m {
            let s0 = out[u];
            let s1 = out[u + m] * tw[u * fstride];
            let s2 = out[u + 2 * m] * tw[2 * u * fstride];
            let s3 = out[u + 3 * m] * tw[3 * u * fstride];
            let s4 = out[u + 4 * m] * tw[4 * u * fstride];
            let s7 = s1 + s4;
            let s10 = s1 - s4;
            let s8 = s2 + s3;
            let s9 = s2 - s3;
            out[u] = s0 + s7 + s8;
            let s5 = C::new(s0.re + s7.re * ya.re + s8.re * yb.re, s0.im + s7.im * ya.re + s8.im * yb.re);
            let s6 = C::new(s10.im * ya.im + s9.im * yb.im, -(s10.re * ya.im + s9.re * yb.im));
            out[u + m] = s5 - s6;
            out[u + 4 * m] = s5 + s6;
            let s11 = C::new(s0.re + s7.re * yb.re + s8.re * ya.re, s0.im + s7.im * yb.re + s8.im * ya.re);
            let s12 = C::new(-s10.im * yb.im + s9.im * ya.im, s10.re * yb.im - s9.re * ya.im);
            out[u + 2 * m] = s11 + s12;
            out[u + 3 * m] = s11 - s12;
        }
    }

    fn bfly_generic(&self, out: &mut [C], fstride: usize, p: usize, m: usize) {
        let n = self.len;
        let mut scratch = vec![C::new(0.0, 0.0); p];
        for u in 0..m {
            for (q, s) in scratch.iter_mut().enumerate() {
                *s = out[u + q * m];
            }
            for q1 in 0..p {
                let k = u + q1 * m;
                let step = (fstride * k) % n;
                let mut idx = 0;
                let mut acc = scratch[0];
                for s in &scratch[1..] {
                    idx += step;
                    if idx >= n {
                        idx -= n;
                    }
                    acc += *s * self.twiddles[idx];
                }
                out[k] = acc;
            }
        }
    }
}

/// Splits `n` into radices, preferring 4 then 2, then odd primes.
fn factorize(mut n: usize) -> Vec<(usize, usize)> {
    let mut stages = Vec::new();
    let mut p = 4;
    while n > 1 {
        while !n.is_multiple_of(p) {
            p = match p {
                4 => 2,
                2 => 3,
                _ => p + 2,
            };
            if p * p > n {
                p = n;
            }
        }
        n /= p;
        stages.push((p, n));
    }
    if stages.is_empty() {
        stages.push((1, 1));
    }
    stages
}

/// Smallest `m >= n` whose only prime factors are 2, 3 and 5.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Column-major strides (first axis fastest).
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(shape.len());
    let mut acc = 1;
    for &n in shape {
        s.push(acc);
        acc *= n;
    }
    s
}

/// Calls `f(base)` for the starting offset of every line along `axis`.
fn for_each_line(shape: &[usize], axis: usize, mut f: impl FnMut(usize)) {
    let st = strides(shape);
    let total: usize = shape.iter().product();
    let n = shape[axis];
    let inner = st[axis];
    let outer_step = inner * n;
    let mut outer = 0;
    while outer < total {
        for i in 0..inner {
            f(outer + i);
        }
        outer += outer_step;
    }
}

/// In-place n-dimensional FFT of a column-major complex tensor.
pub fn fft_nd(data: &mut [C], shape: &[usize], direction: Direction) {
    assert_eq!(data.len(), shape.iter().product::<usize>());
    let st = strides(shape);
    for (axis, &n) in shape.iter().enumerate() {
        if n <= 1 {
            continue;
        }
        let plan = FftPlan::new(n, direction);
        let mut line = vec![C::new(0.0, 0.0); n];
        let mut scratch = vec![C::new(0.0, 0.0); n];
        let stride = st[axis];
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                plan.process(chunk, &mut scratch);
            }
            continue;
        }
        for_each_line(shape, axis, |base| {
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[base + j * stride];
            }
            plan.process(&mut line, &mut scratch);
            for (j, v) in line.iter().enumerate() {
                data[base + j * stride] = *v;
            }
        });
    }
}

/// Unnormalised DST-I along one axis of a column-major real tensor.
///
/// Two real lines are packed into one complex FFT of length `2(N + 1)` on the
/// odd extension `[0, x, 0, -rev(x)]`, whose spectrum is `-2i · DST(x)`.
pub fn dst1_axis(data: &mut [f64], shape: &[usize], axis: usize) {
    let n = shape[axis];
    if n == 0 {
        return;
    }
    let stride = strides(shape)[axis];
    let ext = 2 * (n + 1);
    let plan = FftPlan::new(ext, Direction::Forward);
    let mut buf = vec![C::new(0.0, 0.0); ext];
    let mut scratch = vec![C::new(0.0, 0.0); ext];

    let mut bases = Vec::new();
    for_each_line(shape, axis, |b| bases.push(b));

    for pair in bases.chunks(2) {
        let b0 = pair[0];
        let b1 = pair.get(1).copied();
        buf[0] = C::new(0.0, 0.0);
        buf[n + 1] = C::new(0.0, 0.0);
        for j in 0..n {
            let re = data[b0 + j * stride];
            let im = b1.map_or(0.0, |b| data[b + j * stride]);
            buf[j + 1] = C::new(re, im);
            buf[ext - 1 - j] = C::new(-re, -im);
        }
        plan.process(&mut buf, &mut scratch);
        // V = -2i y0 + 2 y1  =>  y0 = -Im(V)/2, y1 = Re(V)/2
        for k in 0..n {
            let v = buf[k + 1];
            data[b0 + k * stride] = -0.5 * v.im;
            if let Some(b) = b1 {
                data[b + k * stride] = 0.5 * v.re;
            }
        }
    }
}

/// DST-I along every axis.
pub fn dst1_nd(data: &mut [f64], shape: &[usize]) {
    for axis in 0..shape.len() {
        dst1_axis(data, shape, axis);
    }
}
