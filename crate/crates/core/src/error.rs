use alloc::string::String;

use crate::types::InstanceId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An API was driven out of order, e.g. `step` after the episode ended.
    #[error("usage error: {0}")]
    Usage(String),
    /// Trajectories could not be turned into a representation.
    #[error("representation error for instance {instance}: {reason}")]
    Representation { instance: InstanceId, reason: String },
    /// Score tables do not line up for reporting.
    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
