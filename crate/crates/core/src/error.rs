use alloc::boxed::Box;
use alloc::string::String;

use crate::qgen::GenerationRecord;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure reported by an embedding or chat backend.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable after {attempts} attempt(s): {message}")]
    Unreachable { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value in embedding response")]
    NonFinite,
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("stub script exhausted")]
    ScriptExhausted,
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("too few sentences to fit topics: {got} < {needed}")]
    TooFewSentences { got: usize, needed: usize },
    #[error("empty vocabulary after stop-word filtering")]
    EmptyVocabulary,
    #[error("topic {0} has no member sentences")]
    EmptyTopic(u32),
    #[error("unknown topic id {0}")]
    UnknownTopic(u32),
    #[error("empty collection: {0}")]
    EmptyCollection(&'static str),
    #[error("doc_id mismatch: {expected} vs {actual}")]
    DocIdMismatch { expected: String, actual: String },
    #[error("document {0} has no generated queries")]
    MissingQueries(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("completion contained no parseable queries")]
    NoQueriesParsed,
    #[error("query generation for {} failed after {} batch(es): {source}", partial.doc_id, partial.batches_issued)]
    Generation {
        partial: Box<GenerationRecord>,
        source: BackendError,
    },
}
