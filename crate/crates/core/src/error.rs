use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("subgroup is not normal: g·h·g⁻¹ = {conjugate} ∉ H for g = {g}, h = {h}")]
    NotNormal { g: usize, h: usize, conjugate: usize },

    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("inconsistent voltage on edge {edge}: reverse voltage is not the inverse")]
    InconsistentVoltage { edge: usize },

    #[error("operator is not equivariant: commutator entry {violation:e} exceeds tolerance {tolerance:e}")]
    NotEquivariant { violation: f64, tolerance: f64 },

    #[error("kernels live on different covers or ranks")]
    CoverMismatch,

    #[error("base operator is not Hermitian: {0}")]
    NonHermitianBase(String),

    #[error("fold context mismatch: {0}")]
    ContextMismatch(String),

    #[error("partition support diameter {diameter} is not below the even-cover radius {radius}")]
    PartitionTooCoarse { diameter: f64, radius: f64 },

    #[error("section is not H-invariant (deviation {deviation:e})")]
    NotInvariant { deviation: f64 },

    #[error("operator is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("quadrature under-resolved: estimated error {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureUnderresolved { estimate: f64, tolerance: f64 },

    #[error("bad parameterization: {0}")]
    BadParameterization(String),

    #[error("operator is not odd with respect to the grading: {0}")]
    NotGraded(String),

    #[error("spectral gap {gap:e} is below the required floor {floor:e}")]
    NoSpectralGap { gap: f64, floor: f64 },

    #[error("invertibility required: spectral gap {gap:e} below floor {floor:e}")]
    InvertibilityRequired { gap: f64, floor: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
