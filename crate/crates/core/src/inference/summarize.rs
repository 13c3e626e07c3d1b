use crate::context::{count_tokens, truncate_tokens, Level, Summarizer, SummaryRequest};
use crate::scalar::Real;

use super::backend::{BackendError, Completion, LlmBackend, Task};

/// Summaries written by a model. Output is cut to the budget if the model
/// overruns it.
pub struct LlmSummarizer<B> {
    backend: B,
    max_retries: u32,
}

impl<B: LlmBackend> LlmSummarizer<B> {
    pub fn new(backend: B, max_retries: u32) -> Self {
        Self { backend, max_retries }
    }

    pub fn prompt<T>(request: &SummaryRequest<'_, T>) -> String {
        let what = match request.level {
            Level::Cluster => "these customer reviews",
            Level::Story => "these cluster summaries",
            Level::Theme => "these story summaries",
        };
        let body: Vec<&str> = request.sources.iter().map(|s| s.text).collect();
        format!(
            "Summarize {what} in at most {} words. Keep the recurring points and their tone.\n\n{}",
            request.budget,
            body.join("\n")
        )
    }
}

impl<T: Real, B: LlmBackend> Summarizer<T> for LlmSummarizer<B> {
    fn summarize(&self, request: &SummaryRequest<'_, T>) -> Result<String, String> {
        let prompt = Self::prompt(request);
        let node = request.node.to_string();
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            let call = Completion { prompt: &prompt, task: Task::Summary { node: &node }, attempt };
            match self.backend.complete(&call) {
                Ok(text) if count_tokens(&text) > 0 => return Ok(truncate_tokens(&text, request.budget)),
                Ok(_) => last = "empty summary".into(),
                Err(BackendError::Transient(e)) => last = e,
                Err(BackendError::Fatal(e)) => return Err(e),
            }
        }
        Err(last)
    }
}
