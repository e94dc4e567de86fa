//! Model access: embedding and chat-completion backends.
//!
//! The HTTP implementation lives in the `covex` crate; [`crate::stub`] has the
//! deterministic ones used for hermetic runs.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::BackendError;
use crate::vector::Embedding;

/// Default completion budget for every chat call the pipeline issues.
pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Sampling seed; the pipeline passes the attempt or batch number so that
    /// repeated prompts are reproducible yet distinct.
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64) -> Self {
        Self {
            prompt: prompt.into(),
            temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("negative temperature".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

pub trait Embedder: Send + Sync {
    /// Declared output dimension `m`.
    fn dimension(&self) -> usize;

    /// Embeds `texts`, preserving order. Implementations must return exactly
    /// one vector of [`Embedder::dimension`] components per input.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, BackendError>;

    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        let mut out = self.embed_batch(&[text])?;
        out.pop()
            .ok_or_else(|| BackendError::Malformed("no embedding returned".into()))
    }
}

pub trait ChatModel: Send + Sync {
    /// Returns the completion text with trailing whitespace removed.
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, BackendError> {
        (**self).embed_batch(texts)
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, BackendError> {
        (**self).embed_batch(texts)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).chat(request)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for Box<T> {
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).chat(request)
    }
}

/// Checks a backend response against the declared dimension.
pub fn check_dimensions(expected: usize, vectors: &[Embedding]) -> Result<(), BackendError> {
    for v in vectors {
        if v.dimension() != expected {
            return Err(BackendError::DimensionMismatch {
                expected,
                actual: v.dimension(),
            });
        }
    }
    Ok(())
}
