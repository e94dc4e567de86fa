use alloc::string::String;
use alloc::vec::Vec;
use std::sync::Mutex;

use crate::backend::{ChatModel, ChatRequest};
use crate::error::BackendError;

/// Replays canned completions in order and records the requests it saw.
pub(crate) struct Script {
    queue: Mutex<Vec<String>>,
    pub(crate) seen: Mutex<Vec<ChatRequest>>,
}

impl Script {
    pub(crate) fn new<S: Into<String>>(items: Vec<S>) -> Self {
        Self {
            queue: Mutex::new(items.into_iter().map(Into::into).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    pub(crate) fn calls(&self) -> usize {
        self.seen.lock().unwrap().len()
    }
}

impl ChatModel for Script {
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        let mut q = self.queue.lock().unwrap();
        if q.is_empty() {
            Err(BackendError::ScriptExhausted)
        } else {
            Ok(q.remove(0))
        }
    }
}
