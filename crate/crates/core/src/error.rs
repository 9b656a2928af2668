use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("index {index} out of range for {len} unknowns (subdomain {subdomain})")]
    IndexOutOfRange {
        subdomain: usize,
        index: usize,
        len: usize,
    },

    #[error("subdomain {0} is empty")]
    EmptySubdomain(usize),

    #[error("subdomain {subdomain} lists index {index} more than once")]
    DuplicateIndex { subdomain: usize, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("constrained problem is infeasible; violated subdomain rows {rows:?}")]
    Infeasible { rows: Vec<usize> },

    #[error("incompatible Poisson right-hand side: mean {mean:e} is not zero")]
    IncompatibleRhs { mean: f64 },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
