use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A user-supplied parameter violates its documented range.
    #[error("invalid `{field}`: {message}")]
    InvalidParam { field: String, message: String },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("graph is disconnected")]
    Disconnected,

    /// A model stage produced an unusable intermediate result.
    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("routing failed: {0}")]
    Routing(String),

    #[error("no traffic pairs")]
    NoTrafficPairs,

    #[error("deadlock detected on {topology} at offered load {load}")]
    Deadlock { topology: String, load: f64 },
}

impl Error {
    pub(crate) fn param(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Field name for validation errors, if the error carries one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::InvalidParam { field, .. } => Some(field),
            _ => None,
        }
    }
}
