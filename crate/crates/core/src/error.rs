use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("dialogue already padded (index -2 present)")]
    AlreadyPadded,

    #[error("triple presentation ({0}, {1}, {2}) matches neither the ordered nor the misordered pattern")]
    UnsupportedPattern(i64, i64, i64),

    #[error("not enough history: need {needed} indices, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("enumeration guard exceeded: t = {0} > 20")]
    EnumerationGuard(usize),

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: String, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("tape already consumed by backward")]
    TapeConsumed,

    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unresolvable pair index {index} in dialogue of {len} padded pairs")]
    UnresolvableIndex { index: i64, len: usize },
}
