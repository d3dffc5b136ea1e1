use thiserror::Error;

/// Errors raised by the analysis pipelines.
///
/// The variants split into two families: input/precondition problems
/// (the caller handed in something the theory does not cover) and
/// internal failures (a solve that should succeed did not).
/// [`Error::is_input_error`] tells them apart.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("inner component {index} has nonzero constant term {value:e}")]
    NonzeroConstant { index: usize, value: f64 },

    #[error("point outside trust region: distance {distance:e} exceeds radius {radius:e}")]
    Domain { distance: f64, radius: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("ambiguous outcome: {0}")]
    Ambiguous(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Format(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system: {context} (condition number {condition:e})")]
    Singular { context: String, condition: f64 },

    #[error("embedding structure check failed: {0}")]
    EmbeddingStructure(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// True for errors caused by the input rather than by the library.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Structure(_)
                | Error::NonzeroConstant { .. }
                | Error::Domain { .. }
                | Error::Precondition(_)
                | Error::Assumption(_)
                | Error::Unsupported(_)
                | Error::Degenerate(_)
                | Error::Ambiguous(_)
                | Error::Parse { .. }
                | Error::Format(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
