//! Monte-Carlo runs, accuracy metrics and CSV output.
//!
//! Seed splitting: replication `r` simulates its trajectory with
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `r`. The particle filter at
//! position `i` of the estimator list draws from the same seed on stream
//! `(i + 1) << 32 | r`. Every replication is thus reproducible on its own,
//! independent of scheduling, and all estimators consume the same data.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use epmf_core::models::Trajectory;
use epmf_core::{DVector, Estimate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EstimatorSpec, ExperimentConfig};
use crate::estimators::{self, EstimatorRun, GridSettings};
use crate::scenario::Scenario;

pub fn data_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

pub fn estimator_rng(seed: u64, estimator: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((estimator as u64 + 1) << 32) | rep as u64);
    rng
}

/// One replication: the shared data and every estimator's run.
#[derive(Debug, Clone)]
pub struct Replication {
    pub index: usize,
    pub truth: Trajectory,
    pub runs: Vec<EstimatorRun>,
}

/// A replication dropped from all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub replication: usize,
    /// Offending estimator, `None` if simulation failed.
    pub estimator: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub estimator: String,
    pub rmse: Vec<f64>,
    pub astd: Vec<f64>,
    pub mean_step_time: f64,
    pub median_step_time: f64,
    pub fallbacks: usize,
}

impl RunMetrics {
    /// `|RMSE − aSTD| / aSTD` per dimension.
    pub fn consistency(&self) -> Vec<f64> {
        self.rmse.iter().zip(&self.astd).map(|(r, a)| (r - a).abs() / a).collect()
    }

    /// Dimensions where the filter claims more confidence than it earns.
    pub fn optimistic(&self) -> Vec<bool> {
        self.rmse.iter().zip(&self.astd).map(|(r, a)| r > a).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub estimators: Vec<EstimatorSpec>,
    pub metrics: Vec<RunMetrics>,
    /// Successful replications in index order.
    pub replications: Vec<Replication>,
    pub failures: Vec<Failure>,
}

/// Per-dimension RMSE and aSTD over all replications and steps:
/// `sqrt(mean((x − x̂)²))` and `sqrt(mean(P_jj))`.
pub fn accuracy(truth: &[&[DVector<f64>]], estimates: &[&[Estimate]]) -> (Vec<f64>, Vec<f64>) {
    let n = truth.first().and_then(|t| t.first()).map_or(0, |x| x.len());
    let (mut se, mut var, mut count) = (vec![0.0; n], vec![0.0; n], 0usize);
    for (xs, es) in truth.iter().zip(estimates) {
        assert_eq!(xs.len(), es.len(), "one estimate per true state");
        for (x, e) in xs.iter().zip(es.iter()) {
            for j in 0..n {
                se[j] += (x[j] - e.mean[j]).powi(2);
                var[j] += e.cov[(j, j)];
            }
            count += 1;
        }
    }
    let root = |v: Vec<f64>| v.into_iter().map(|s| (s / count.max(1) as f64).sqrt()).collect();
    (root(se), root(var))
}

/// Mean and median of the step times, skipping each run's warm-up step.
pub fn timing(runs: &[&EstimatorRun]) -> (f64, f64) {
    let mut t: Vec<f64> = runs.iter().flat_map(|r| r.step_times.iter().skip(1).copied()).collect();
    if t.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    t.sort_by(f64::total_cmp);
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let mid = t.len() / 2;
    let median = if t.len() % 2 == 1 { t[mid] } else { 0.5 * (t[mid - 1] + t[mid]) };
    (mean, median)
}

fn run_replication(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    grid: &GridSettings,
    rep: usize,
) -> Result<Replication, Failure> {
    let fail = |estimator: Option<String>, e: epmf_core::Error| Failure {
        replication: rep,
        estimator,
        message: e.to_string(),
    };
    let truth = scenario.simulate(cfg.steps, &mut data_rng(cfg.seed, rep)).map_err(|e| fail(None, e))?;
    let mut runs = Vec::with_capacity(cfg.estimators.len());
    for (i, spec) in cfg.estimators.iter().enumerate() {
        let label = || Some(spec.label());
        let mut est =
            estimators::build(spec, scenario, grid, estimator_rng(cfg.seed, i, rep)).map_err(|e| fail(label(), e))?;
        runs.push(estimators::run(est.as_mut(), &truth.measurements).map_err(|e| fail(label(), e))?);
    }
    Ok(Replication { index: rep, truth, runs })
}

/// Runs `cfg.mc` replications in parallel. A replication on which any
/// estimator fails is dropped for all of them.
pub fn run_monte_carlo(cfg: &ExperimentConfig, scenario: &Scenario) -> MonteCarloResult {
    let grid = GridSettings { counts: cfg.axis_counts(), sigma_mult: cfg.sigma_mult };
    let outcomes: Vec<Result<Replication, Failure>> =
        (0..cfg.mc).into_par_iter().map(|r| run_replication(cfg, scenario, &grid, r)).collect();
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => replications.push(r),
            Err(f) => {
                log::warn!(
                    "replication {} dropped ({}): {}",
                    f.replication,
                    f.estimator.as_deref().unwrap_or("simulation"),
                    f.message
                );
                failures.push(f);
            }
        }
    }
    let metrics = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let truth: Vec<&[DVector<f64>]> = replications.iter().map(|r| r.truth.states.as_slice()).collect();
            let est: Vec<&[Estimate]> = replications.iter().map(|r| r.runs[i].estimates.as_slice()).collect();
            let runs: Vec<&EstimatorRun> = replications.iter().map(|r| &r.runs[i]).collect();
            let (rmse, astd) = accuracy(&truth, &est);
            let (mean_step_time, median_step_time) = timing(&runs);
            RunMetrics {
                estimator: spec.label(),
                rmse,
                astd,
                mean_step_time,
                median_step_time,
                fallbacks: runs.iter().map(|r| r.fallbacks).sum(),
            }
        })
        .collect();
    MonteCarloResult { estimators: cfg.estimators.clone(), metrics, replications, failures }
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    estimator: &'a str,
    dim: usize,
    rmse: f64,
    astd: f64,
    mean_step_time_s: f64,
    median_step_time_s: f64,
}

#[derive(Serialize)]
struct TraceRow {
    rep: usize,
    k: usize,
    dim: usize,
    truth: f64,
    estimate: f64,
    variance: f64,
}

pub fn write_metrics_csv<W: io::Write>(out: W, metrics: &[RunMetrics]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for m in metrics {
        for j in 0..m.rmse.len() {
            w.serialize(MetricsRow {
                estimator: &m.estimator,
                dim: j,
                rmse: m.rmse[j],
                astd: m.astd[j],
                mean_step_time_s: m.mean_step_time,
                median_step_time_s: m.median_step_time,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-step truth, estimate and variance of estimator `i`, one row per
/// replication, step and dimension.
pub fn write_trace_csv<W: io::Write>(out: W, result: &MonteCarloResult, i: usize) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &result.replications {
        for (k, (x, e)) in r.truth.states.iter().zip(&r.runs[i].estimates).enumerate() {
            for dim in 0..x.len() {
                w.serialize(TraceRow {
                    rep: r.index,
                    k,
                    dim,
                    truth: x[dim],
                    estimate: e.mean[dim],
                    variance: e.cov[(dim, dim)],
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.csv` and one `trace_<estimator>.csv` per estimator into
/// `dir`; returns the paths written.
pub fn write_outputs(dir: &Path, result: &MonteCarloResult) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("metrics.csv");
    write_metrics_csv(fs::File::create(&path)?, &result.metrics)?;
    written.push(path);
    for (i, spec) in result.estimators.iter().enumerate() {
        let path = dir.join(format!("trace_{}.csv", spec.label()));
        write_trace_csv(fs::File::create(&path)?, result, i)?;
        written.push(path);
    }
    Ok(written)
}

/// Plain-text table with the consistency diagnostic.
pub fn summary(result: &MonteCarloResult) -> String {
    let mut s = format!(
        "{} replications used, {} dropped\n{:<20} {:>4} {:>10} {:>10} {:>8} {:>12} {:>12}\n",
        result.replications.len(),
        result.failures.len(),
        "estimator",
        "dim",
        "rmse",
        "astd",
        "|r-a|/a",
        "mean step s",
        "median s"
    );
    for m in &result.metrics {
        let (c, opt) = (m.consistency(), m.optimistic());
        for j in 0..m.rmse.len() {
            s += &format!(
                "{:<20} {:>4} {:>10.4} {:>10.4} {:>8.3} {:>12.6} {:>12.6}{}\n",
                m.estimator,
                j,
                m.rmse[j],
                m.astd[j],
                c[j],
                m.mean_step_time,
                m.median_step_time,
                if opt[j] { "  optimistic" } else { "" }
            );
        }
        if m.fallbacks > 0 {
            s += &format!("{:<20} fallbacks: {}\n", m.estimator, m.fallbacks);
        }
    }
    s
}
