use thiserror::Error;

/// Failure classes raised by the library layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The element left the group manifold by more than the renormalization can repair.
    #[error("numerical drift: group defect {defect:.3e} exceeds the renormalization limit")]
    Drift { defect: f64 },

    #[error("reduction did not terminate after {moves} moves")]
    ReductionFailure { moves: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("precision error: achieved error bound {achieved:.3e}, requested {requested:.3e}")]
    Precision { achieved: f64, requested: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
