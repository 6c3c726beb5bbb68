use thiserror::Error;

/// Errors raised by the geometry, navigation and control layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("a point on the n-sphere needs at least 2 coordinates, got {0}")]
    TooFewCoordinates(usize),

    #[error("vector is not unit length (norm = {norm})")]
    NotUnit { norm: f64 },

    #[error("vector norm {norm} is too small to normalize")]
    ZeroVector { norm: f64 },

    #[error("vector is not tangent at its base point (|<x, v>| = {inner})")]
    NotTangent { inner: f64 },

    #[error("non-finite coordinate")]
    NonFinite,

    #[error("point too close to the projection pole (1 - x_(n+1) = {gap})")]
    PoleSingularity { gap: f64 },

    #[error("half angle {0} rad is outside (0, pi/2)")]
    InvalidHalfAngle(f64),

    #[error("constraint set is empty")]
    NoConstraints,

    #[error("constraint {index} has non-positive denominator cos(theta) - a0.a = {denominator}; was the set validated?")]
    InconsistentConstraints { index: usize, denominator: f64 },

    #[error("invalid sphere world: {0}")]
    InvalidWorld(String),

    #[error("point outside the free space (min margin {min_margin})")]
    OutsideDomain { min_margin: f64 },

    #[error("degenerate navigation configuration: target lies on the free-space boundary")]
    DegenerateConfiguration,

    #[error("input Gram matrix is near singular (condition number {condition:e})")]
    NearSingular { condition: f64 },

    #[error("invalid navigation parameters: {0}")]
    InvalidParams(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario fails validation: {0}")]
    ValidationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
