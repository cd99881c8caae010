use thiserror::Error;

#[derive(Debug, Error)]
pub enum NahmError {
    #[error("axis index {0} is not in 1..=4")]
    InvalidAxis(usize),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("no spectral gap for {what}: gap {gap:.3e} below required {required:.1e}")]
    NoSpectralGap { what: &'static str, gap: f64, required: f64 },
    #[error("resolution gate refused: {0}")]
    ResolutionGate(String),
    #[error("singular solve: {0}")]
    SingularSolve(String),
    #[error("gram conditioning dropped every generator")]
    Conditioning,
    #[error("point {0:?} lies outside the ball")]
    OutsideBall([f64; 4]),
    #[error("coincident points")]
    CoincidentPoints,
    #[error("symbol vanishes on the boundary (margin {0:.3e}); operator is not Fredholm")]
    NotFredholm(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, NahmError>;
