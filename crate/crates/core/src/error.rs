use thiserror::Error;

/// Errors surfaced by the numerical layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("periodic boundary with side length 2 is ambiguous: sites 0 and 1 are neighbors both ways along an axis")]
    PeriodicDoubleEdge,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {asymmetry:.3e} exceeds {tolerance:.3e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("eigenvalue iteration failed to converge at index {index} after {sweeps} sweeps")]
    NoConvergence { index: usize, sweeps: usize },

    #[error("invalid band structure: {0}")]
    InvalidBands(String),

    #[error("({0}, {1}) is not a corner of the rectangle support")]
    NotACorner(String, String),

    #[error("corner ({0}, {1}) is not good; strip covers require a good corner")]
    CornerNotGood(String, String),

    #[error("measures carry different provenance: {0} vs {1}")]
    ProvenanceMismatch(String, String),

    #[error("family is not covariant: max deviation {deviation:.3e} at shift {shift:?}")]
    NotCovariant { deviation: f64, shift: Vec<usize> },

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
