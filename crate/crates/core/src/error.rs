use alloc::string::String;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("propagation error: {0}")]
    Propagation(String),
    #[error("simulation failed at t = {t:.3} s: {reason}")]
    SimulationFailure { t: f64, reason: String },
    /// A weight tensor failed validation. `tensor` names the offending entry.
    #[error("weight load error in `{tensor}`: {reason}")]
    Load { tensor: String, reason: String },
    #[error("evaluation error: {0}")]
    Eval(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn load(tensor: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Load {
            tensor: tensor.into(),
            reason: reason.into(),
        }
    }
}
