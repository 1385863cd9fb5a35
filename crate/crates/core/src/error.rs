use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("finite-difference stencil degenerate at {0}")]
    DegenerateStencil(String),
    #[error("weight is not semipositive: curvature density {density:e} at {location}")]
    InvalidEpsilon { density: f64, location: String },
    #[error("point outside the domain: {0}")]
    OutOfDomain(String),
    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),
    #[error("Gram matrix is not positive definite")]
    NotPD,
    #[error("Gram matrix ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("section space is empty or undefined: {0}")]
    UndefinedSpace(String),
    #[error("ball of radius {radius} around {center} meets a singular point")]
    BallTouchesAtom { center: String, radius: f64 },
    #[error("profile is not convex: {0}")]
    NonConvexProfile(String),
    #[error("basis is not toric: {0}")]
    NotToric(String),
    #[error("numerically degenerate: {0}")]
    NumericallyDegenerate(String),
    #[error("common zero set is positive dimensional")]
    PositiveDimensional,
    #[error("degree {0} exceeds the supported maximum")]
    PTooLarge(u32),
    #[error("cache entry corrupt: {0}")]
    CacheCorrupt(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
