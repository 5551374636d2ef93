use thiserror::Error;

/// Crate-wide error type.
///
/// Validation failures carry the name of the violated condition so the CLI
/// can report exactly which inequality broke.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension must satisfy N >= 3, got {0}")]
    InvalidDimension(u32),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field/grid mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("field contains a non-finite value at node {index} (r = {radius})")]
    NonFiniteValue { index: usize, radius: f64 },
    #[error("validation failed: {condition}")]
    ValidationFailed { condition: String },
    #[error("singular data: source behaves like r^-{exponent} near the origin, not integrable against r^(N-1)")]
    SingularData { exponent: f64 },
    #[error("source does not decay fast enough past the truncation radius (fitted exponent {exponent})")]
    NonDecayingTail { exponent: f64 },
    #[error("barrier estimate diverged: ratio keeps growing under refinement")]
    EstimateDiverged,
    #[error("no barrier: {0}")]
    NoBarrier(String),
    #[error("potential ordering violated: V2 > V1 at r = {radius} ({v2} > {v1})")]
    PotentialOrdering { radius: f64, v1: f64, v2: f64 },
    #[error("quadratic form assembly failed: {0}")]
    Assembly(String),
    #[error("eigensolver did not reach residual tolerance ({residual} after {iterations} iterations)")]
    EigenSolve { residual: f64, iterations: usize },
    #[error("no endpoint found: energy stayed positive up to scale cap {0}")]
    EndpointNotFound(f64),
    #[error("energy integrand overflowed")]
    EnergyOverflow,
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("test function must vanish before the truncation radius (support {support} >= {r_max})")]
    TestFunctionSupport { support: f64, r_max: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
