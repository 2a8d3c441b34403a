use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("sector L={l}, N={n} has dimension {dim}, above the cap of {cap}")]
    Capacity { l: usize, n: usize, dim: u128, cap: u128 },

    #[error("box [{i1}, {i2}] holds {width} sites but the basis has N={n}")]
    BoxMismatch { i1: usize, i2: usize, width: usize, n: usize },

    #[error("free-fermion engine requires W = 0 (got W = {w})")]
    EngineDomain { w: f64 },

    #[error("{what} did not converge (residual {residual:.3e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("ground-state search did not converge after {sweeps} sweeps; energies {energies:?}")]
    SweepNonConvergence { sweeps: usize, energies: Vec<f64> },

    #[error("pair creation at site {site} annihilates the state (zero norm)")]
    QuenchImpossible { site: usize },

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("time {time} is not after the last recorded time {last}")]
    NonMonotoneTime { time: f64, last: f64 },

    #[error("fit window [{t_min}, {t_max}] holds {found} points, need at least 3 (cadence {cadence})")]
    TooFewPoints { t_min: f64, t_max: f64, found: usize, cadence: f64 },

    #[error("extrapolation needs at least 3 distinct sizes: {0}")]
    DegenerateSizes(String),

    #[error("velocity maximum sits on the grid edge at W = {w}; widen the scan")]
    PeakAtEdge { w: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("linear algebra: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
