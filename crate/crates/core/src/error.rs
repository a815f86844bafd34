use thiserror::Error;

pub type Result<T> = std::result::Result<T, GeodynError>;

/// Distance from the origin below which potential evaluations are refused.
pub const SINGULAR_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeodynError {
    #[error("position is within {SINGULAR_RADIUS:e} of the singular origin (|x| = {0:e})")]
    SingularOrigin(f64),

    #[error("drift segment passes within {SINGULAR_RADIUS:e} of the origin")]
    OriginCrossing,

    #[error("orbit energy H = {0} is not negative")]
    NonNegativeEnergy(f64),

    #[error("orbit is rectilinear (zero angular momentum)")]
    DegenerateOrbit,

    #[error("orbit is circular; the LRL angle is undefined")]
    CircularOrbit,

    #[error("Kepler equation did not converge (M = {mean_anomaly}, e = {ecc})")]
    KeplerSolve { mean_anomaly: f64, ecc: f64 },

    #[error("operation requires dimension {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("trajectory has {0} samples; at least 3 are needed")]
    TrajectoryTooShort(usize),

    #[error("quadrature did not converge: {coarse} vs {fine}")]
    Quadrature { coarse: f64, fine: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    Newton { iterations: usize, residual: f64 },

    #[error("inner solve for coordinate {coordinate} did not converge")]
    InnerSolve { coordinate: usize },

    #[error("unknown discrete Lagrangian `{0}`")]
    UnknownLagrangian(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<GeodynError>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lambda*h^2 = {0} is at or beyond the stability boundary 4")]
    StabilityBoundary(f64),

    #[error("sample point {index} lies within {distance} of a singularity")]
    SamplingDomain { index: usize, distance: f64 },

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl GeodynError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        GeodynError::Step {
            step,
            source: Box::new(self),
        }
    }
}
