use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or config invariant was violated. `field` is a dotted
    /// path such as `kernel.variances`.
    #[error("{field}: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("simulation diverged at step {step} (|x| = {magnitude:e})")]
    Diverged { step: usize, magnitude: f64 },

    #[error("steady state not reached after {periods} periods (last mismatch {mismatch:e})")]
    SteadyStateNotConverged { periods: usize, mismatch: f64 },

    #[error("objective is not finite at the initial point")]
    NonFiniteObjective,

    #[error("{0}")]
    Undefined(&'static str),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any attached context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics (divergence, non-convergence,
    /// non-finite objective) as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Diverged { .. }
                | Error::SteadyStateNotConverged { .. }
                | Error::NonFiniteObjective
        )
    }
}
