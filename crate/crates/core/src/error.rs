use std::path::PathBuf;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid counts, dimensions or hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A named token, entity or template does not exist.
    #[error("unknown {kind}: {name}")]
    Lookup { kind: &'static str, name: String },

    /// A dataset or config file does not match its schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    /// Arguments that violate an operation's precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Non-finite values or divergence.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A run cannot start because its inputs are not in the required state.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 for usage/config problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Lookup { .. } | Error::Schema { .. } | Error::Invalid(_) => 1,
            Error::Numerical(_) | Error::Precondition(_) | Error::Io { .. } | Error::Format { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
