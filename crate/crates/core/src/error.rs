use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Invalid parameters or inconsistent inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("k = {k} exceeds the number of items ({items})")]
    KTooLarge { k: usize, items: usize },
    #[error("requested {requested} inference stages but the model has {available}")]
    TooManyStages { requested: usize, available: usize },
    #[error("exhaustive search over {prefixes} prefixes exceeds the limit of {limit}")]
    SearchTooLarge { prefixes: u128, limit: u128 },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("item {item} out of range for {items} items")]
    ItemOutOfRange { item: usize, items: usize },
    #[error("query feature {index} out of range for dimension {dim}")]
    QueryOutOfRange { index: usize, dim: usize },
    #[error("candidate item {0} is already in the prefix")]
    CandidateInPrefix(usize),
    #[error("context list is empty")]
    EmptyContext,
    #[error("{0}")]
    Invalid(String),
}

/// Failures reading or writing the binary model format.
#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("model file is truncated")]
    Truncated,
    #[error("model file has inconsistent dimensions: {0}")]
    DimensionMismatch(String),
    #[error("unknown position weight scheme tag {0}")]
    UnknownScheme(u8),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Failures while parsing input data files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite parameter in stage {stage} after {updates} updates")]
    NonFinite { stage: usize, updates: u64 },
}
