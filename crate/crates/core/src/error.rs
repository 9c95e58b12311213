use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("column `{0}` is declared but absent from the input")]
    MissingColumn(String),

    #[error("{0}: no usable rows")]
    NoUsableRows(PathBuf),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("class `{class}` has {count} samples, too few for {what}")]
    ClassTooSmall {
        class: String,
        count: usize,
        what: String,
    },

    #[error("lexical overlap requires sentence pairs")]
    NotPair,

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("evaluations were computed on different dev sets: {0}")]
    DevSetMismatch(String),

    #[error("not enough points: {0}")]
    NotEnoughPoints(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
