use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("integrand is undefined on every node of the mask")]
    AllUndefined,

    #[error("set is empty")]
    EmptySet,

    #[error("set is not compactly inside the ball: {0}")]
    NotCompact(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("too few usable data points: {got} < {need}")]
    TooFewPoints { got: usize, need: usize },

    #[error("domination check failed: {violations} of {checked} nodes violate (worst {worst:e})")]
    DominationFailure { violations: usize, checked: usize, worst: f64 },

    #[error("pair has zero witness norm")]
    ZeroNorm,

    #[error("point is singular or off the grid")]
    SingularPoint,

    #[error("unknown gallery entry `{0}`")]
    UnknownEntry(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter { name, reason: reason.into() }
}
