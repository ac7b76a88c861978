use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical blow-up at step {step} (t = {time})")]
    NumericalBlowup { step: usize, time: f64 },

    #[error("unsupported multi-index order: l + n = {order} (max {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("singular induced metric (smallest singular value {min_singular:e})")]
    SingularMetric { min_singular: f64 },

    #[error("degenerate state: {0}")]
    DegenerateState(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
