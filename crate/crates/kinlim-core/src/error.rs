use thiserror::Error;

/// Errors reported by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("the zero wavevector is excluded")]
    ZeroMode,
    #[error("operator is singular on the mean mode (eps = 0 with a nonzero mean source)")]
    SingularMean,
    #[error("expected a perturbation field, got a full distribution")]
    RoleMismatch,
    #[error("hierarchy assembly failed: level {level}, mode {mode}, symbol {symbol:e}")]
    HierarchyAssembly { level: usize, mode: usize, symbol: f64 },
    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("grid incompatibility: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
