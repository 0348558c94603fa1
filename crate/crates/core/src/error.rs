use std::path::PathBuf;

/// Errors surfaced by every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// Input record that failed to parse, with its 1-based line number.
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Invalid hyperparameter or configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numeric failure during optimisation.
    #[error("training error at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Model document that could not be restored.
    #[error("model load error in field `{field}`: {message}")]
    Load { field: String, message: String },

    #[error("unsupported model format_version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
