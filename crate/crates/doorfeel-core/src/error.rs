use alloc::string::String;
use core::fmt;

/// Errors produced by the pure pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Input violates a documented invariant (empty series, out-of-range score, ...).
    Validation(String),
    /// Marker lies on the hinge axis; the opening angle is undefined.
    DegenerateGeometry(String),
    /// Force and position streams share no time interval.
    NoTemporalOverlap,
    /// Array dimensions do not match what the operation expects.
    Shape(String),
    /// Operation called out of order (e.g. backward before forward).
    State(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Validation(msg) => write!(f, "validation error: {msg}"),
            CoreError::DegenerateGeometry(msg) => write!(f, "geometry error: {msg}"),
            CoreError::NoTemporalOverlap => {
                write!(f, "synchronization error: force and position streams do not overlap in time")
            }
            CoreError::Shape(msg) => write!(f, "shape error: {msg}"),
            CoreError::State(msg) => write!(f, "state error: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
