use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("aspect `{0}` has neither a term nor a category")]
    AspectWithoutTarget(String),

    #[error("aspect `{id}`: term span {start}..{end} is outside the sentence ({len} tokens)")]
    InvalidTermSpan {
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("embedding file {0} is empty")]
    EmptyEmbeddings(String),

    #[error("line {line}: expected {expected} vector components, found {found}")]
    EmbeddingArity {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error(
        "no easy instances were found among {units} aspect units; gradual inference needs \
         labeled evidence to start (check the lexicon coverage and the corpus text)"
    )]
    NoEvidence { units: usize },

    #[error("ACSA aspect units are present but no word embeddings were supplied")]
    MissingEmbeddings,

    #[error("total conflict between mass functions (K = 1)")]
    TotalConflict,

    #[error("mass functions over different frames cannot be combined")]
    FrameMismatch,

    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("exact enumeration refused: {unlabeled} unlabeled variables (limit {limit})")]
    TooLarge { unlabeled: usize, limit: usize },

    #[error("inconsistent factor graph: {0}")]
    Inconsistent(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{count} unit ids do not match the corpus; first: {}", first.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(", "))]
    UnitMismatch { count: usize, first: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error stems from bad input or usage rather than a defect.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::TotalConflict
                | Error::FrameMismatch
                | Error::TooLarge { .. }
                | Error::Inconsistent(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
