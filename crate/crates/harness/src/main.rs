use std::fs;
use std::path::PathBuf;

use anyhow::{Context, bail};
use clap::Parser;
use epmf_harness::bench::{BenchOptions, bench_scaling, default_sizes};
use epmf_harness::config::{EstimatorSpec, ExperimentConfig, ModelKind, TerrainSource};
use epmf_harness::experiment::{run_monte_carlo, summary, write_outputs};
use epmf_harness::scenario::Scenario;
use epmf_harness::terrain::save_terrain;

/// Monte-Carlo terrain-aided navigation experiments with point-mass and
/// particle filters.
#[derive(Debug, Parser)]
#[command(name = "epmf-tan", version)]
struct Cli {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Comma-separated list, e.g. `pmf_dense,epmf_fft,epmf_fst:0.01,pf:1681`.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorSpec>>,
    /// Time steps K per run.
    #[arg(long)]
    steps: Option<usize>,
    /// Monte-Carlo replications M.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid points per axis: one value for all axes or one per axis.
    #[arg(long, value_delimiter = ',')]
    grid_points: Option<Vec<usize>>,
    #[arg(long)]
    sigma_mult: Option<f64>,
    /// Terrain raster file replacing the synthetic map.
    #[arg(long)]
    terrain: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Time dense and FFT steps over a range of grid sizes instead of running
    /// the Monte-Carlo experiment.
    #[arg(long)]
    bench: bool,
    /// Write the experiment's terrain map to this file and exit.
    #[arg(long)]
    export_terrain: Option<PathBuf>,
}

impl Cli {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = self.model {
            cfg.model = m;
            if self.estimators.is_none() && self.config.is_none() && m == ModelKind::CoordinatedTurn4d {
                cfg.estimators = vec![
                    EstimatorSpec::PmfDense,
                    EstimatorSpec::EpmfFft,
                    EstimatorSpec::Pf { particles: m.default_particles() },
                ];
                if self.grid_points.is_none() {
                    cfg.grid_points = vec![21];
                }
            }
        }
        if let Some(e) = &self.estimators {
            cfg.estimators = e.clone();
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.mc {
            cfg.mc = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.grid_points {
            cfg.grid_points = v.clone();
        }
        if let Some(v) = self.sigma_mult {
            cfg.sigma_mult = v;
        }
        if let Some(p) = &self.terrain {
            cfg.terrain = TerrainSource::File { path: p.clone() };
        }
        if let Some(p) = &self.out_dir {
            cfg.out_dir = p.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = cli.config()?;

    if cli.bench {
        let sizes = default_sizes(cfg.model);
        let opts = BenchOptions { sigma_mult: cfg.sigma_mult, ..Default::default() };
        let table = bench_scaling(cfg.model, &sizes, &opts)?;
        fs::create_dir_all(&cfg.out_dir)?;
        let path = cfg.out_dir.join("bench.csv");
        table.write_csv(fs::File::create(&path)?)?;
        print!("{}", table.summary());
        println!("wrote {}", path.display());
        return Ok(());
    }

    let scenario = Scenario::from_config(&cfg).context("building scenario")?;
    if let Some(path) = &cli.export_terrain {
        save_terrain(&scenario.measurement.map, path)?;
        println!("wrote {}", path.display());
        return Ok(());
    }

    log::info!(
        "{} replications of {} steps, model {}, grid {:?}, estimators {}",
        cfg.mc,
        cfg.steps,
        cfg.model,
        cfg.axis_counts(),
        cfg.estimators.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
    );
    let result = run_monte_carlo(&cfg, &scenario);
    if result.replications.is_empty() {
        bail!("every replication failed; first error: {}", result.failures[0].message);
    }
    let written = write_outputs(&cfg.out_dir, &result)?;
    print!("{}", summary(&result));
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
