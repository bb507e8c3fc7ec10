use thiserror::Error;

/// Errors raised by lattice, grid, norm and operator computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("unsupported dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("level {0} outside the lattice cap |j| <= {cap}", cap = crate::lattice::MAX_LEVEL)]
    LevelOutOfRange(i64),

    #[error("cube index {0} outside the lattice cap |k| < 2^40")]
    IndexOutOfRange(i64),

    #[error("resolution cap exceeded: {0}")]
    ResolutionCap(String),

    #[error("cube {cube} is not representable on a grid of resolution {j_max}")]
    FinerThanGrid { cube: String, j_max: i32 },

    #[error("region lies outside the grid domain")]
    OutsideDomain,

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty box")]
    EmptyBox,

    #[error("function is not supported on its cube: mass {0} outside")]
    SupportViolation(f64),

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
