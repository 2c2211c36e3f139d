use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("circular reference through relations: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("ambiguous attribute reference `{0}`")]
    Ambiguity(String),

    #[error("relation `{0}` is used more than once in a query")]
    DuplicateRelation(String),

    #[error("row already exists in `{table}`")]
    DuplicateKey { table: String },

    #[error("statement not supported here: {0}")]
    Unsupported(String),

    #[error("unbound placeholder: statement needs {needed} parameters, got {given}")]
    Parameters { needed: usize, given: usize },

    #[error(
        "updates to key or foreign-key attribute `{attribute}` of `{relation}` are not supported"
    )]
    UnsupportedUpdate { relation: String, attribute: String },

    #[error("ancestor row missing in `{relation}` while resolving the lock root")]
    Orphan { relation: String },

    #[error("timed out acquiring lock on `{table}`")]
    LockTimeout { table: String },

    #[error("read kept observing marked rows after {retries} attempts")]
    DirtyReadTimeout { retries: usize },

    #[error("corrupt write-ahead log at offset {offset}: {reason}")]
    WalCorrupt { offset: u64, reason: String },

    #[error("corrupt snapshot: {0}")]
    SnapshotCorrupt(String),

    #[error("injected crash after {0}")]
    Crashed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }
}
