use thiserror::Error;

/// Errors raised by the estimation and fusion routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("singular matrix in {context} (condition number estimate {condition:e})")]
    Singular {
        context: &'static str,
        condition: f64,
    },

    /// `D = P(k|k') - P(k|k)` is too ill-conditioned for the inverse Kalman
    /// filter tracklet; the decorrelated tracklet should be used instead.
    #[error("tracklet difference matrix near-singular (condition {condition:e} > {threshold:e})")]
    NearSingularDifference { condition: f64, threshold: f64 },

    #[error("track carries no new information between frames {from} and {to}")]
    NoNewInformation { from: i64, to: i64 },

    #[error("gain matrix is rank deficient (condition {condition:e})")]
    RankDeficientGain { condition: f64 },

    #[error("non-positive range {range} after {context}")]
    NonPositiveRange { context: &'static str, range: f64 },

    #[error("singular noise block for target {target}, frame {frame}")]
    SingularBlock { target: usize, frame: usize },

    #[error("{0} requires at least one input")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
