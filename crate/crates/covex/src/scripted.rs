//! Chat backend that replays a fixed list of completions in order.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use covex_core::backend::{ChatModel, ChatRequest};
use covex_core::BackendError;

use crate::error::{Error, Result};
use crate::fsio;

/// Replays completions first-in first-out; an empty queue is an error.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    queue: Mutex<VecDeque<String>>,
}

impl ScriptedChat {
    pub fn new<S: Into<String>>(completions: impl IntoIterator<Item = S>) -> Self {
        Self {
            queue: Mutex::new(completions.into_iter().map(Into::into).collect()),
        }
    }

    /// Loads a JSON array of completion strings.
    pub fn from_file(path: &Path) -> Result<Self> {
        let items: Vec<String> = fsio::read_json(path)?;
        if items.is_empty() {
            return Err(Error::format(path, "chat script is empty"));
        }
        Ok(Self::new(items))
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl ChatModel for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> std::result::Result<String, BackendError> {
        request.validate()?;
        let next = self
            .queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .ok_or(BackendError::ScriptExhausted)?;
        Ok(next)
    }
}
