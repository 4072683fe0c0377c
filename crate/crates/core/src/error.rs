use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trace too short: {len} samples, need at least {min}")]
    TraceTooShort { len: usize, min: usize },

    #[error("forbidden label triple {0}")]
    ForbiddenTriple(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty scanpath")]
    EmptyScanpath,

    #[error("page layout has no links")]
    EmptyLayout,

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out-of-order sample: index {got} after {last}")]
    OutOfOrderSample { last: u64, got: u64 },

    #[error("missing event: {0}")]
    MissingEvent(&'static str),

    #[error("nothing to cancel")]
    NothingToCancel,

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }
}
