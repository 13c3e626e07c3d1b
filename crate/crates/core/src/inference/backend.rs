use serde::{Deserialize, Serialize};

use super::Method;

/// What a completion request is for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task<'a> {
    Sentiment { method: Method, review_id: &'a str, run: usize },
    Summary { node: &'a str },
}

#[derive(Debug, Clone)]
pub struct Completion<'a> {
    pub prompt: &'a str,
    pub task: Task<'a>,
    /// Zero for the first try of a cell.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, throttling, 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
}

/// Identification recorded in run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub kind: String,
    pub model: String,
    pub settings: serde_json::Value,
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &Completion<'_>) -> Result<String, BackendError>;

    fn info(&self) -> BackendInfo;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, request: &Completion<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn info(&self) -> BackendInfo {
        (**self).info()
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, request: &Completion<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn info(&self) -> BackendInfo {
        (**self).info()
    }
}
