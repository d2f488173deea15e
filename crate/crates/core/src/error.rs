use thiserror::Error;

/// Errors raised by the q-calculus engine and the evaluators built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QError {
    #[error("q must satisfy 0 < q < 1, got {0}")]
    InvalidQ(f64),

    #[error("interval requires a < b, got [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },

    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(String),

    #[error("non-finite series term at index {index}")]
    NonFiniteTerm { index: usize },

    #[error("non-finite value of `{function}` at t = {t}")]
    NonFiniteValue { function: String, t: f64 },

    #[error("point {t} lies outside [{a}, {b}]")]
    Domain { t: f64, a: f64, b: f64 },

    #[error(
        "q-derivative at the left endpoint t = a is a limit; use q_derivative_at_left_endpoint"
    )]
    EndpointRequiresLimit,

    #[error("left-endpoint q-derivative limit does not exist: {0}")]
    LimitDoesNotExist(String),

    #[error("q-derivative failed at node t = {t}: {source}")]
    NodeEvaluation {
        t: f64,
        #[source]
        source: Box<QError>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("moment kind {0} has no closed form (series only)")]
    UnsupportedKind(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T, E = QError> = std::result::Result<T, E>;
