use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("table is not convex: second difference at index {index} is {value:e}")]
    NonConvexTable { index: usize, value: f64 },

    #[error("field is not c-concave: max |p^(c cbar) - p| = {defect:e}")]
    NotCConcave { defect: f64 },

    #[error("dual energy is infinite at node {node}")]
    InfiniteDualEnergy { node: usize },

    #[error("mass mismatch: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("mass condition violated: mass {mass} not in (0, {limit})")]
    MassCondition { mass: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("support reaches the domain boundary at t = {time}")]
    SupportTouchesBoundary { time: f64 },

    #[error("operation unavailable: {0}")]
    Unavailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
