use thiserror::Error;

use crate::geometry::GeometryKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coprime array parameters F={f}, Q={q} are not coprime")]
    NonCoprime { f: usize, q: usize },

    #[error("operation not supported for {0:?} layouts")]
    UnsupportedKind(GeometryKind),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("angle {0} rad lies outside [-pi/2, pi/2]")]
    InvalidAngle(f64),

    #[error("cannot place {users} users with minimum separation {min_separation_deg} deg")]
    PlacementFailure { users: usize, min_separation_deg: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("lag {lag} inside the contiguous segment has no contributing sensor pair")]
    GeometryInconsistency { lag: i64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("index {index} out of range for {len} users")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("filter has zero output power (w = 0 with no noise)")]
    InvalidFilter,

    #[error("parse error at column {position} of {input:?}: {message}")]
    Parse {
        input: String,
        position: usize,
        message: String,
    },

    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
