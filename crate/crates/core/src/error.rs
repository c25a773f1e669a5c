use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: missing value for gene `{gene}`")]
    MissingValue { line: u64, gene: String },

    #[error("duplicate gene id `{0}`")]
    DuplicateGene(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no gene passed the filter")]
    EmptyFilterResult,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no cut of the dendrogram yields {wanted} clusters smaller than {size}")]
    CutNotFound { size: usize, wanted: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),

    #[error("stage `{stage}` failed (artifact {}): {source}", artifact.display())]
    Stage {
        stage: String,
        artifact: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration, including a
    /// missing input file, rather than a failure while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::MissingValue { .. }
            | Error::DuplicateGene(_)
            | Error::Dimension(_)
            | Error::InvalidParameter(_)
            | Error::Format(_) => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
