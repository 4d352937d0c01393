use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid blade indices {indices:?} for dimension {dim}")]
    InvalidIndex { indices: Vec<usize>, dim: usize },
    #[error("form is not homogeneous of degree 2")]
    NotDegreeTwo,
    #[error("spinor is not pure: annihilator has dimension {found}, expected {expected}")]
    NotPure { found: usize, expected: usize },
    #[error("annihilator meets its conjugate (E ∩ Ē ≠ 0)")]
    Degenerate,
    #[error("matrix is not an almost complex structure (‖I²+1‖ = {residual:.3e})")]
    NotAlmostComplex { residual: f64 },
    #[error("matrix is not a generalized complex structure: {0}")]
    NotGeneralizedComplex(String),
    #[error("bivector is not antisymmetric (‖σ+σᵀ‖ = {residual:.3e})")]
    NotAntisymmetric { residual: f64 },
    #[error("imaginary part of the 2-form is degenerate")]
    DegenerateImaginaryPart,
    #[error("structures do not commute (‖[J₁,J₂]‖ = {residual:.3e})")]
    NotCommuting { residual: f64 },
    #[error("extracted metric is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    IndefiniteMetric { min_eigenvalue: f64 },
    #[error("singular form or matrix: {0}")]
    Singular(String),
    #[error("γ∧γ̄ vanishes")]
    VanishingVolume,
    #[error("S has a (1,1) component of size {residual:.3e}")]
    TypeViolation { residual: f64 },
    #[error("negative radicand {value:.3e} for H₂₂² at r = {r}")]
    NegativeRadicand { r: f64, value: f64 },
    #[error("{which} = {value:.3e} is not positive at r = {r}")]
    NonPositiveH { r: f64, which: &'static str, value: f64 },
    #[error("radius {r} outside the profile range [{min}, {max}]")]
    OutOfRange { r: f64, min: f64, max: f64 },
    #[error("singular metric denominator at r = {r}")]
    SingularDenominator { r: f64 },
    #[error("grid does not span the required range: {0}")]
    InsufficientRange(String),
    #[error("flow step control violated: h·Lip = {product:.3e} exceeds 1")]
    StepControl { product: f64 },
    #[error("interpolation degenerate: {0}")]
    InterpolationDegenerate(String),
    #[error("linear solve singular: {0}")]
    SolverSingular(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
