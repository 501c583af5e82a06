//! Step-time scaling of the dense and FFT point-mass filters.

use std::io;
use std::time::Instant;

use epmf_core::Result;
use epmf_core::epmf::{EpmfConfig, epmf_predict};
use epmf_core::pmf::{FilterState, dense_propagate, init_filter, measurement_update, predict_with};
use epmf_core::redesign::RedesignConfig;
use serde::Serialize;

use crate::config::{ExperimentConfig, ModelKind};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    /// Timed steps per size, after one untimed warm-up step.
    pub repeats: usize,
    /// Largest grid on which the dense filter is timed.
    pub dense_limit: usize,
    pub sigma_mult: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { repeats: 3, dense_limit: 20_000, sigma_mult: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub points_per_axis: usize,
    pub n: usize,
    pub dense_s: Option<f64>,
    pub fft_s: f64,
}

/// `ln t = intercept + slope · ln N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
}

impl PowerFit {
    /// Least-squares fit on log-log axes; needs two distinct sizes.
    pub fn fit(points: &[(f64, f64)]) -> Option<Self> {
        let m = points.len() as f64;
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(n, t)| (n.ln(), t.ln())).unzip();
        let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx <= 0.0 || sxx.is_nan() {
            return None;
        }
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        Some(Self { slope, intercept: my - slope * mx })
    }

    pub fn predict(&self, n: f64) -> f64 {
        (self.intercept + self.slope * n.ln()).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub model: ModelKind,
    pub rows: Vec<BenchRow>,
    pub dense_fit: Option<PowerFit>,
    pub fft_fit: Option<PowerFit>,
}

impl BenchTable {
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{:>6} {:>10} {:>14} {:>14}\n", "axis", "N", "dense s", "fft s");
        for r in &self.rows {
            let dense = r.dense_s.map_or("-".to_string(), |t| format!("{t:.6}"));
            s += &format!("{:>6} {:>10} {:>14} {:>14.6}\n", r.points_per_axis, r.n, dense, r.fft_s);
        }
        let slope = |f: Option<PowerFit>| f.map_or("n/a".to_string(), |f| format!("{:.3}", f.slope));
        s += &format!("log-log slope: dense {}, fft {}\n", slope(self.dense_fit), slope(self.fft_fit));
        if let (Some(fit), Some(last)) = (self.dense_fit, self.rows.last())
            && last.dense_s.is_none()
        {
            let t = fit.predict(last.n as f64);
            s += &format!("dense extrapolated at N={}: {:.3} s ({:.0}x fft)\n", last.n, t, t / last.fft_s);
        }
        s
    }
}

/// Default grid sizes per axis for `--bench`.
pub fn default_sizes(model: ModelKind) -> Vec<usize> {
    match model {
        ModelKind::RandomWalk2d => vec![21, 31, 41, 61, 81, 101],
        ModelKind::CoordinatedTurn4d => vec![5, 7, 9, 11, 15, 21],
    }
}

/// Times a full filter step (measurement update, redesign, grid movement,
/// prediction) of the dense and FFT filters for each per-axis size.
pub fn bench_scaling(model: ModelKind, sizes: &[usize], opts: &BenchOptions) -> Result<BenchTable> {
    let scenario = Scenario::from_config(&ExperimentConfig { model, ..Default::default() })
        .map_err(|e| epmf_core::Error::InvalidArgument(e.to_string()))?;
    let z =
        scenario.measurement.measurement_function(scenario.init.mean.as_slice())? + scenario.measurement.noise.mean();
    let discrete = scenario.dynamics.discrete_equivalent();
    let redesign = RedesignConfig::new(opts.sigma_mult)?;
    let epmf_cfg = EpmfConfig { redesign: Some(redesign), ..Default::default() };
    let mut rows = Vec::with_capacity(sizes.len());
    for &p in sizes {
        let counts = vec![p; model.dim()];
        let n: usize = counts.iter().product();
        // a later step, so that the timed step includes the redesign
        let state = FilterState { step: 1, ..init_filter(&scenario.init, opts.sigma_mult, &counts)? };
        let step_fft = |s: FilterState| {
            epmf_predict(measurement_update(s, z, &scenario.measurement)?, &scenario.dynamics, &epmf_cfg)
        };
        let step_dense = |s: FilterState| {
            let s = measurement_update(s, z, &scenario.measurement)?;
            predict_with(s, &discrete, Some(&redesign), |pmd, dst| dense_propagate(pmd, dst, &discrete))
        };
        let fft_s = time_steps(&state, opts.repeats, step_fft)?;
        let dense_s = if n <= opts.dense_limit { Some(time_steps(&state, opts.repeats, step_dense)?) } else { None };
        log::info!("bench N={n}: dense {dense_s:?} s, fft {fft_s} s");
        rows.push(BenchRow { points_per_axis: p, n, dense_s, fft_s });
    }
    let dense_pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.dense_s.map(|t| (r.n as f64, t))).collect();
    let fft_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.fft_s)).collect();
    Ok(BenchTable { model, dense_fit: PowerFit::fit(&dense_pts), fft_fit: PowerFit::fit(&fft_pts), rows })
}

fn time_steps<F>(state: &FilterState, repeats: usize, step: F) -> Result<f64>
where
    F: Fn(FilterState) -> Result<FilterState>,
{
    step(state.clone())?;
    let mut total = 0.0;
    for _ in 0..repeats.max(1) {
        let s = state.clone();
        let t0 = Instant::now();
        let out = step(s)?;
        total += t0.elapsed().as_secs_f64();
        drop(out);
    }
    Ok(total / repeats.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0].iter().map(|&n: &f64| (n, 3e-6 * n.powi(2))).collect();
        let f = PowerFit::fit(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.predict(160.0) - 3e-6 * 160.0f64.powi(2)).abs() < 1e-9);
        assert!(PowerFit::fit(&[(5.0, 1.0), (5.0, 2.0)]).is_none());
    }

    #[test]
    fn small_bench_runs() {
        let opts = BenchOptions { repeats: 1, dense_limit: 200, sigma_mult: 4.0 };
        let t = bench_scaling(ModelKind::RandomWalk2d, &[7, 11, 21], &opts).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t.rows[2].dense_s.is_none() && t.rows[1].dense_s.is_some());
        assert!(t.dense_fit.is_some() && t.fft_fit.is_some());
        assert!(t.summary().contains("extrapolated"));
    }
}
