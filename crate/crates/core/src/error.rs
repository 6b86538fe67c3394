use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("expected {expected} dimension values, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("offer {0} is not in the catalog")]
    UnknownOffer(u64),

    #[error("shop {0} has no recorded activity")]
    UnknownShop(u64),

    #[error("offer {0} is out of the embedding vocabulary")]
    OutOfVocab(u64),

    #[error("no training session has two or more in-vocabulary offers")]
    EmptyCorpus,

    #[error("training pool contains a single class")]
    SingleClassPool,

    #[error("feature vector has {got} values, model expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("no positive labels")]
    NoPositives,

    #[error("feature leakage: {0}")]
    Leakage(String),

    #[error("model has no trees")]
    UntrainedModel,

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("no test users")]
    NoTestUsers,

    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, column: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            reason: reason.into(),
        }
    }
}
