use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("index {index} out of range for {len} control channels")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("query time {t} outside grid [0, {horizon}]")]
    OutsideGrid { t: f64, horizon: f64 },

    /// Integration produced a non-finite value or blew past the norm bound.
    #[error("integration diverged at node {node}")]
    DivergedIntegration { node: usize },

    #[error("Riccati solve failed: {0}")]
    RiccatiFailure(String),

    #[error("line search stalled after {backtracks} backtracks")]
    LineSearchStalled { backtracks: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
