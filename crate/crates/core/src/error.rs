use alloc::string::String;

/// Failure modes of the filtering primitives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dynamics matrix is singular")]
    SingularDynamics,

    #[error("turn rate must be non-zero; use the random-walk model instead")]
    SingularTurnRate,

    #[error("degenerate density: weights sum to {0}")]
    DegenerateDensity(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("position ({x}, {y}) lies outside the terrain map")]
    OutOfMap { x: f64, y: f64 },

    #[error("measurement {0} has zero likelihood on every grid point")]
    MeasurementInconsistent(f64),

    #[error("destination grid is not the image of the source grid under the dynamics")]
    MisalignedGrids,

    #[error("finite-difference step {dt} is unstable (centre coefficient {center}); use dt <= {max_dt}")]
    UnstableStep { dt: f64, center: f64, max_dt: f64 },

    #[error("density mass {mass:e} at the grid boundary exceeds the Dirichlet tolerance")]
    BoundaryLeak { mass: f64 },

    #[error("diffusion is not diagonal in lattice coordinates (off-diagonal {0:e}); diagonalize the noise first")]
    NonDiagonalDiffusion(f64),

    #[error("all particle weights are zero")]
    DegenerateWeights,
}

pub type Result<T> = core::result::Result<T, Error>;
