use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("SMILES parse error at byte {offset}: {msg}")]
    Smiles { offset: usize, msg: String },

    #[error("duplicate id `{0}`")]
    DuplicateKey(String),

    #[error("id `{id}` not found in table `{table}`")]
    MissingKey { id: String, table: String },

    #[error("invalid instance at line {line}: {msg}")]
    InvalidInstance { line: usize, msg: String },

    #[error("structure `{id}`: {source}")]
    Structure {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("correlation undefined: {0} input is constant")]
    UndefinedCorrelation(&'static str),

    #[error("degenerate sample: all paired differences are zero")]
    DegenerateSample,

    #[error("model format error: {0}")]
    Model(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
