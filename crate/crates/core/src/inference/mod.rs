//! Prompting, label parsing, LLM backends and the N-run experiment runner.

mod backend;
mod http;
mod matrix;
mod mock;
mod runner;
mod summarize;

pub use backend::{BackendError, BackendInfo, Completion, LlmBackend, Task};
pub use http::{HttpBackend, HttpConfig, RequestStyle};
pub use matrix::{RunMatrix, RunMetadata};
pub use mock::{flip_probability, MockBackend};
pub use runner::{run_experiment, RateLimiter, RunSettings};
pub use summarize::LlmSummarizer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::ContextSummary;
use crate::corpus::Review;

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("SSAS prompt for `{0}` needs cluster, story and theme summaries")]
    MissingContext(String),
    #[error("no sentiment label in response `{0}`")]
    Parse(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error("prompts mix methods")]
    MixedMethods,
    #[error("review `{review_id}` run {run}: gave up after {attempts} attempts: {last}")]
    Exhausted { review_id: String, run: usize, attempts: u32, last: String },
    #[error("review `{review_id}` run {run}: {message}")]
    Fatal { review_id: String, run: usize, message: String },
    #[error("malformed run matrix: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Ssas,
}

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Ssas => "ssas",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = InferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Method::Direct),
            "ssas" => Ok(Method::Ssas),
            _ => Err(InferenceError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [SentimentLabel::Positive, SentimentLabel::Negative, SentimentLabel::Neutral];

    pub fn name(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SentimentLabel {
    type Err = InferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SentimentLabel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| InferenceError::Parse(s.to_string()))
    }
}

/// The label word appearing earliest in `text`, case-insensitively.
pub fn parse_label(text: &str) -> Result<SentimentLabel, InferenceError> {
    let lower = text.to_lowercase();
    SentimentLabel::ALL
        .into_iter()
        .filter_map(|l| lower.find(l.name()).map(|pos| (pos, l)))
        .min_by_key(|&(pos, _)| pos)
        .map(|(_, l)| l)
        .ok_or_else(|| InferenceError::Parse(text.to_string()))
}

const INSTRUCTION: &str =
    "Classify the sentiment of the review below as Positive, Negative or Neutral. Answer with one word.";
const CONTEXT_INSTRUCTION: &str = "Use the classification context to interpret the review.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub method: Method,
    pub review_id: String,
    /// Review text, verbatim.
    pub text: String,
    pub context_block: Option<String>,
}

impl Prompt {
    pub fn render(&self) -> String {
        match &self.context_block {
            None => format!("{INSTRUCTION}\n\nReview:\n{}", self.text),
            Some(ctx) => format!("{INSTRUCTION}\n{CONTEXT_INSTRUCTION}\n\nContext:\n{ctx}\n\nReview:\n{}", self.text),
        }
    }
}

/// `summaries` are the cluster, story and theme summaries of the review's
/// path, in that order; DIRECT ignores them.
pub fn build_prompt(
    review: &Review,
    method: Method,
    summaries: Option<[&ContextSummary; 3]>,
) -> Result<Prompt, InferenceError> {
    let context_block = match method {
        Method::Direct => None,
        Method::Ssas => {
            let [cluster, story, theme] = summaries.ok_or_else(|| InferenceError::MissingContext(review.id.clone()))?;
            if [cluster, story, theme].iter().all(|s| s.text.trim().is_empty()) {
                return Err(InferenceError::MissingContext(review.id.clone()));
            }
            Some(format!("Theme: {}\nStory: {}\nCluster: {}", theme.text, story.text, cluster.text))
        }
    };
    Ok(Prompt { method, review_id: review.id.clone(), text: review.text.clone(), context_block })
}
