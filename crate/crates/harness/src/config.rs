//! Experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::terrain::SyntheticTerrain;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum ModelKind {
    /// Nearly constant position with known velocity input, state `[x, y]`.
    #[serde(rename = "random_walk_2d")]
    #[value(name = "random_walk_2d")]
    RandomWalk2d,
    /// Coordinated turn with known rate, state `[x, vx, y, vy]`.
    #[serde(rename = "coordinated_turn_4d")]
    #[value(name = "coordinated_turn_4d")]
    CoordinatedTurn4d,
}

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::RandomWalk2d => 2,
            ModelKind::CoordinatedTurn4d => 4,
        }
    }

    /// Default particle count of the bootstrap filter.
    pub fn default_particles(self) -> usize {
        match self {
            ModelKind::RandomWalk2d => 1681,
            ModelKind::CoordinatedTurn4d => 1_200_000,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::RandomWalk2d => "random_walk_2d",
            ModelKind::CoordinatedTurn4d => "coordinated_turn_4d",
        })
    }
}

/// An estimator and its parameters.
///
/// Textual form: `pmf_dense`, `epmf_fft`, `epmf_fst:<dt>`, `pf:<particles>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorSpec {
    PmfDense,
    EpmfFft,
    EpmfFst { dt: f64 },
    Pf { particles: usize },
}

impl EstimatorSpec {
    /// Name used in output files.
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::PmfDense => "pmf_dense".into(),
            EstimatorSpec::EpmfFft => "epmf_fft".into(),
            EstimatorSpec::EpmfFst { dt } => format!("epmf_fst_{dt}"),
            EstimatorSpec::Pf { particles } => format!("pf_{particles}"),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::PmfDense => f.write_str("pmf_dense"),
            EstimatorSpec::EpmfFft => f.write_str("epmf_fft"),
            EstimatorSpec::EpmfFst { dt } => write!(f, "epmf_fst:{dt}"),
            EstimatorSpec::Pf { particles } => write!(f, "pf:{particles}"),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match (name, arg) {
            ("pmf_dense", None) => Ok(EstimatorSpec::PmfDense),
            ("epmf_fft", None) => Ok(EstimatorSpec::EpmfFft),
            ("epmf_fst", Some(a)) => {
                let dt: f64 = a.parse().map_err(|_| format!("bad time step in {s:?}"))?;
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(format!("time step must be positive in {s:?}"));
                }
                Ok(EstimatorSpec::EpmfFst { dt })
            }
            ("epmf_fst", None) => Ok(EstimatorSpec::EpmfFst { dt: 0.01 }),
            ("pf", Some(a)) => {
                let particles: usize = a.parse().map_err(|_| format!("bad particle count in {s:?}"))?;
                if particles == 0 {
                    return Err(format!("particle count must be positive in {s:?}"));
                }
                Ok(EstimatorSpec::Pf { particles })
            }
            _ => Err(format!("unknown estimator {s:?}; expected pmf_dense, epmf_fft, epmf_fst:<dt> or pf:<particles>")),
        }
    }
}

impl TryFrom<String> for EstimatorSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<EstimatorSpec> for String {
    fn from(e: EstimatorSpec) -> String {
        e.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainSource {
    /// Generated map centred on the nominal trajectory.
    Synthetic(SyntheticTerrain),
    /// Raster file in the `EPMFTER1` format.
    File { path: PathBuf },
}

impl Default for TerrainSource {
    fn default() -> Self {
        TerrainSource::Synthetic(SyntheticTerrain::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub estimators: Vec<EstimatorSpec>,
    /// Number of time steps `K`; each run has `K + 1` measurements.
    pub steps: usize,
    /// Monte-Carlo replications `M`.
    pub mc: usize,
    pub seed: u64,
    /// Grid points per axis; a single entry applies to every axis.
    pub grid_points: Vec<usize>,
    pub sigma_mult: f64,
    pub terrain: TerrainSource,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::RandomWalk2d,
            estimators: vec![
                EstimatorSpec::PmfDense,
                EstimatorSpec::EpmfFft,
                EstimatorSpec::EpmfFst { dt: 0.01 },
                EstimatorSpec::Pf { particles: 1681 },
            ],
            steps: 50,
            mc: 100,
            seed: 1,
            grid_points: vec![41],
            sigma_mult: 4.0,
            terrain: TerrainSource::default(),
            out_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    /// Per-axis grid counts for the configured model.
    pub fn axis_counts(&self) -> Vec<usize> {
        let n = self.model.dim();
        if self.grid_points.len() == 1 { vec![self.grid_points[0]; n] } else { self.grid_points.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.mc == 0 {
            return bad("mc must be at least 1".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("estimator list is empty".into());
        }
        let n = self.model.dim();
        if self.grid_points.len() != 1 && self.grid_points.len() != n {
            return bad(format!("grid_points needs 1 or {n} entries, got {}", self.grid_points.len()));
        }
        if let Some(c) = self.grid_points.iter().find(|&&c| c < 3 || c % 2 == 0) {
            return bad(format!("grid points per axis must be odd and at least 3, got {c}"));
        }
        if !(self.sigma_mult > 0.0 && self.sigma_mult.is_finite()) {
            return bad(format!("sigma_mult must be positive, got {}", self.sigma_mult));
        }
        let fst = self.estimators.iter().any(|e| matches!(e, EstimatorSpec::EpmfFst { .. }));
        if fst && self.model != ModelKind::RandomWalk2d {
            return bad(
                "epmf_fst needs continuous dynamics with non-singular diffusion; only random_walk_2d has them".into()
            );
        }
        for (i, e) in self.estimators.iter().enumerate() {
            if self.estimators[..i].iter().any(|o| o.label() == e.label()) {
                return bad(format!("estimator {e} listed twice"));
            }
        }
        Ok(())
    }
}
