use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario schema violation at `{key}`: {reason}")]
    Schema { key: String, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("singular density: node {node} carries mass {mass} but the reference measure vanishes there")]
    SingularDensity { node: usize, mass: f64 },

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("unsupported dimension {dim}: {context}")]
    UnsupportedDimension { dim: usize, context: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate transport input: {0}")]
    DegenerateInput(String),

    #[error("pivot cap {cap} exceeded; best feasible plan has value {value} and duality gap {gap}")]
    PivotCapExceeded { cap: usize, value: f64, gap: f64 },

    #[error("transport certificate failed: {0}")]
    Certificate(String),

    #[error("interaction kernel is not symmetric: {0}")]
    AsymmetricKernel(String),

    #[error("support is empty after thresholding at {0:e}")]
    EmptySupport(f64),

    #[error("{0}")]
    Precondition(String),

    #[error("no bracket for the ODE constant in [1e-8, 1e8]: T(1) = {at_low} at C = 1e-8 and {at_high} at C = 1e8")]
    NoBracket { at_low: f64, at_high: f64 },

    #[error("outer Picard loop did not converge after {iterations} iterations (last sup change {last_change:e})")]
    PicardDiverged { iterations: usize, last_change: f64 },

    #[error("instance too large for exact enumeration: {0}")]
    TooLarge(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
