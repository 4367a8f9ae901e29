use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] agentmix_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: integrity check failed: {message}")]
    Integrity { path: PathBuf, message: String },

    #[error("{path}: format version {found}, this build reads version {expected}")]
    Version {
        path: PathBuf,
        found: u64,
        expected: u64,
    },

    /// Transport failure talking to an embedding service.
    #[error("embedding provider: {0}")]
    Provider(String),

    /// A peer broke an agreed contract (vector length, model shape).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("lookup: {0}")]
    Lookup(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
