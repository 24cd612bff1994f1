use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("algebra level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },

    #[error("invalid algebra level {0} (expected 0..=3)")]
    InvalidLevel(usize),

    #[error("coordinate count {got} does not match level (expected {expected})")]
    CoordCount { expected: usize, got: usize },

    #[error("cannot invert the zero element")]
    ZeroInverse,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point is off the sphere: |x| = {norm}, expected {radius}")]
    OffSphere { norm: f64, radius: f64 },

    #[error("vector is not tangent at the base point (inner product {0:e})")]
    NotTangent(f64),

    #[error("antipodal endpoints: shortest geodesic is not unique")]
    Antipodal,

    #[error("point lies outside the map domain: {0}")]
    Domain(String),

    #[error("exact differential is not available for this map")]
    ExactUnavailable,

    #[error("winding resolution too coarse: angular step {step} rad")]
    Resolution { step: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
