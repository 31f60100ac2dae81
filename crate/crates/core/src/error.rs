use thiserror::Error;

use crate::charts::ChartId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("atlas resolution {0} too small (need N >= 17)")]
    ResolutionTooSmall(usize),

    #[error("chart extent {0} outside [1.2, 2]")]
    ExtentOutOfRange(f64),

    #[error("point z = 0 has no image in the other chart")]
    PointAtInfinity,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("director collapsed at {chart:?} node {node}: |d| = {norm:.3e} < 0.1")]
    Singularity {
        chart: ChartId,
        node: usize,
        norm: f64,
    },

    #[error("elliptic solver did not converge after {iterations} CG iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("time series is not uniformly spaced at report {index}")]
    NonUniformGrid { index: usize },

    #[error("non-positive value {value:e} at sample {index}; cannot take logarithm")]
    NonPositiveSample { index: usize, value: f64 },

    #[error("not enough samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("no admissible maps in topping study ({skipped} skipped)")]
    EmptyAdmittedSet { skipped: usize },

    #[error("trajectory has no snapshots")]
    NoSnapshots,

    #[error("snapshot parse error at byte offset {offset}: {reason}")]
    Snapshot { offset: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
