use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The three source points of an affine sample are collinear or coincident.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Registration and matching produced zero instance pairs.
    #[error("no instances: {0}")]
    NoInstances(String),

    #[error("{}line {line}: {message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("load error in {entry}: {message}")]
    Load { entry: String, message: String },

    #[error("incomplete results: {0}")]
    IncompleteResults(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a file path to a parse error that was produced from in-memory content.
    pub fn with_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(p.into()),
                line,
                message,
            },
            other => other,
        }
    }
}
