//! Interchangeable label sources: an LLM chat-completions client, a gold
//! label replayer, and a persisted queue answered by human annotators.

mod bench;
mod human;
mod llm;
mod oracle;
mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::textprep::{Label, LabelSet};

pub use bench::{benchmark_annotators, AnnotatorScore, BenchmarkReport, SampleFailure};
pub use human::{HumanAnnotator, QueueError, Task, TaskQueue, TaskStatus, TaskView};
pub use llm::{ChatMessage, ChatRequest, LlmAnnotator, LlmConfig};
pub use oracle::OracleAnnotator;
pub use prompt::{build_prompt, parse_label, PROMPT_TEMPLATE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub sample_id: String,
    /// The review as written, before preprocessing.
    pub raw_text: String,
    pub label_set: LabelSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Llm,
    Human,
    Oracle,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Llm => "llm",
            Source::Human => "human",
            Source::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub sample_id: String,
    pub label: Label,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotatorError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unparseable response {raw_response:?}")]
    UnparseableResponse { raw_response: String },
    #[error("no gold label for sample `{0}`")]
    MissingGold(String),
    #[error("annotation cancelled")]
    Cancelled,
    #[error("task queue: {0}")]
    Queue(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A label source. Results come back in request order, one per request;
/// a failed request yields an error in its slot rather than being dropped.
pub trait Annotator {
    fn source(&self) -> Source;

    fn annotate(&self, requests: &[AnnotationRequest]) -> Vec<Result<AnnotationResult, AnnotatorError>>;
}
