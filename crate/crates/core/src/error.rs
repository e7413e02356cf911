use thiserror::Error;

use crate::model::EventId;
use crate::validate::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Elaboration(String),

    #[error("model is not valid: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),

    #[error("model has no 'label \"target\"' but the query needs a target set")]
    MissingTarget,

    #[error("no delay given for fd event {0}")]
    MissingDelay(EventId),

    #[error("delay for fd event {event} must be positive, got {delay}")]
    NonPositiveDelay { event: EventId, delay: f64 },

    #[error("state index {0} out of range")]
    StateOutOfRange(usize),

    #[error("fd event {0} has no active states")]
    EmptyRegion(String),

    #[error("fd event {0} is never set in any reachable state")]
    NoSettingState(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("expected reward at the declared delays is infinite; specify better initial delays")]
    InfiniteUpperBound,

    #[error("discretization is degenerate for fd event {event}: {reason}")]
    DegenerateBounds { event: String, reason: String },

    #[error("compute budget exceeded: {required} vector-matrix products needed, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("all {0} simulation runs were truncated; no estimate available")]
    AllRunsTruncated(usize),

    #[error("{0}")]
    Export(String),
}

impl Error {
    /// Budget and convergence failures, as opposed to problems with the model itself.
    pub fn is_resource_failure(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded { .. } | Error::NoConvergence { .. } | Error::AllRunsTruncated(_)
        )
    }
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
