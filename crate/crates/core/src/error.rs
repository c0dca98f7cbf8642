use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed bundle {}: {message}", .path.display())]
    Bundle { path: PathBuf, message: String },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("edge endpoint {node} out of range for {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },

    #[error("cannot add {needed} inter-class edges: only {available} candidate pairs remain")]
    InsufficientCandidates { needed: usize, available: usize },

    #[error("class {class} has {count} members, need at least {required}")]
    ClassTooSmall {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("candidate pool exhausted: {0}")]
    PoolExhausted(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),

    #[error("edge training set is degenerate ({positives} positives, {negatives} negatives)")]
    DegenerateEdgeSet { positives: usize, negatives: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("budget of {budget} labels exhausted")]
    BudgetExhausted { budget: usize },
    #[error("node {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("node {node} out of range for {num_nodes} nodes")]
    UnknownNode { node: usize, num_nodes: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::Shape {
        op,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
