use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("missing header row in {0}")]
    MissingHeader(PathBuf),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("label out of range: sample {sample} has label {label} but there are {n_classes} classes")]
    LabelOutOfRange {
        sample: usize,
        label: usize,
        n_classes: usize,
    },

    #[error("class {class} has {found} assigned features, expected {expected}")]
    RowSum {
        class: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate class representation: classes {0} and {1} use identical features")]
    DuplicateRows(usize, usize),

    #[error("class {class} has {found} samples, {needed} required")]
    InsufficientSamples {
        class: usize,
        found: usize,
        needed: usize,
    },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("expected {expected} split, got {found}")]
    WrongSplit { expected: String, found: String },

    #[error("spatial maps are required but not present")]
    MissingMaps,

    #[error("infeasible: {reason}")]
    Infeasible {
        reason: String,
        /// Pair constraints that could not be satisfied together, if any.
        pairs: Vec<(usize, usize)>,
    },

    #[error("search exceeded its limit of {limit} {what}")]
    IterationCap { what: &'static str, limit: usize },

    #[error("instance too large for exhaustive enumeration ({size} candidates, limit {limit})")]
    TooLarge { size: u128, limit: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
