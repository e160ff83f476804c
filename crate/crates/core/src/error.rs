use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AtlasError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("language is undecidable for empty text")]
    EmptyText,

    #[error("no documents survived cleaning")]
    EmptyCorpus,

    #[error("vocabulary is empty: no document contains a usable token")]
    EmptyVocabulary,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("centered data has zero variance (all rows identical)")]
    ZeroVariance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite gradient at iteration {iteration}, point {point}")]
    NonFiniteGradient { iteration: usize, point: usize },

    #[error("missing cache from stage `{stage}`: run `atlas {stage}` first")]
    MissingStage { stage: &'static str },

    #[error("stale cache from stage `{stage}`: configuration changed since it was produced; re-run `atlas {stage}`")]
    StaleStage { stage: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl AtlasError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AtlasError::InvalidParameter(msg.into())
    }

    /// Process exit status for this error: 1 usage/config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            AtlasError::Config(_)
            | AtlasError::InvalidParameter(_)
            | AtlasError::MissingStage { .. }
            | AtlasError::StaleStage { .. } => 1,
            AtlasError::Read { .. }
            | AtlasError::Parse { .. }
            | AtlasError::EmptyText
            | AtlasError::EmptyCorpus
            | AtlasError::EmptyVocabulary
            | AtlasError::DimensionMismatch { .. }
            | AtlasError::ZeroVariance => 2,
            AtlasError::Write { .. } | AtlasError::NonFiniteGradient { .. } => 3,
        }
    }
}
