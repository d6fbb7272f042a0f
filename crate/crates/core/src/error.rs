use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("curvature mismatch: {left} vs {right}")]
    CurvatureMismatch { left: f64, right: f64 },
    #[error("curvature must be finite and strictly negative, got {0}")]
    InvalidCurvature(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("point lies on or outside the ball boundary (norm {norm}, radius {radius})")]
    OutsideBall { norm: f64, radius: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("integration produced a non-finite state at step {step}")]
    Integration { step: usize },
    #[error("class `{0}` has no features")]
    EmptyClass(String),
    #[error("need at least {needed} classes, found {found}")]
    TooFewClasses { needed: usize, found: usize },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite meta loss at iteration {iteration}")]
    MetaDiverged { iteration: usize },
}
