use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("agents {i} and {j} coincide (distance {distance:e})")]
    Coincident { i: usize, j: usize, distance: f64 },

    #[error("bonded pair at distance {distance} is outside the radius {radius}")]
    BeyondRadius { distance: f64, radius: f64 },

    #[error("team members disagree on {what}: {a} vs {b}")]
    Mismatch { what: &'static str, a: f64, b: f64 },

    #[error("grid minimum lies on the boundary of the search box in coordinate {coord}")]
    BoxTooSmall { coord: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
