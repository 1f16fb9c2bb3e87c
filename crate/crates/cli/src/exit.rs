//! Process exit codes.

use std::fmt;

use shg_core::Error;

pub const SUCCESS: i32 = 0;
pub const VALIDATION: i32 = 2;
pub const PIPELINE: i32 = 3;
pub const DEADLOCK: i32 = 4;

/// An input file or flag combination that could not be accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputError {
    /// Offending field or JSON path, when known.
    pub field: Option<String>,
    pub message: String,
}

impl InputError {
    pub fn new(field: impl Into<Option<String>>, message: impl Into<String>) -> Self {
        InputError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "invalid `{field}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for InputError {}

pub fn code_for_core(e: &Error) -> i32 {
    match e {
        Error::InvalidParam { .. } | Error::InvalidTopology(_) | Error::NoTrafficPairs => VALIDATION,
        Error::Deadlock { .. } => DEADLOCK,
        Error::Disconnected | Error::Pipeline(_) | Error::Routing(_) => PIPELINE,
    }
}

pub fn code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<InputError>().is_some() {
        return VALIDATION;
    }
    if let Some(e) = err.downcast_ref::<Error>() {
        return code_for_core(e);
    }
    PIPELINE
}
