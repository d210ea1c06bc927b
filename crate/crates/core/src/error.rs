use thiserror::Error;

/// Errors surfaced by the simulation, transport and statistics layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate projection: point coincides with the disk center")]
    DegenerateProjection,

    #[error("point is not on the boundary: distance {dist:e} exceeds tolerance {tol:e}")]
    NotOnBoundary { dist: f64, tol: f64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("initial region is not contained in the domain")]
    RegionOutsideDomain,

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("ensemble size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("ensemble must hold at least {min} particles, got {got}")]
    TooFewParticles { got: usize, min: usize },

    #[error("brute-force matching is limited to n <= {max}, got {n}")]
    BruteForceTooLarge { n: usize, max: usize },

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },

    #[error("rate fit needs at least 2 admissible points, got {got}")]
    TooFewFitPoints { got: usize },

    #[error("rate fit requires positive means; got {value} at nu = {nu}")]
    NonpositiveMean { nu: f64, value: f64 },

    #[error("snapshot time {time} is not on the step grid with dt = {dt}")]
    SnapshotOffGrid { time: f64, dt: f64 },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid fit input: {0}")]
    InvalidFitInput(String),

    #[error("sample {sample} at nu = {nu} failed: {source}")]
    SampleFailed {
        nu: f64,
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("thread pool construction failed: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, Error>;
