use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A block that must be symmetric positive-definite failed factorization.
    #[error("{what}: block {block} is not positive definite")]
    NotPositiveDefinite { what: &'static str, block: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid input: {0}")]
    Validation(String),

    /// Fixed-point iteration hit its iteration cap. `history` carries the
    /// last few relative residuals, oldest first.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size guard: {what} needs dimension {dim}, limit is {limit}")]
    SizeGuard {
        what: &'static str,
        dim: usize,
        limit: usize,
    },

    #[error("i/o: {0}")]
    Io(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error behind any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NotPositiveDefinite { .. }
                | Error::Singular(_)
                | Error::NonConvergence { .. }
                | Error::Domain(_)
        )
    }
}
