use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize, Serializer};

use super::{build_prompt, parse_label, AnnotationRequest, AnnotationResult, Annotator, AnnotatorError, Source};

fn default_max_tokens() -> u32 {
    15
}

fn default_max_retries() -> u32 {
    3
}

fn default_parallelism() -> usize {
    4
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_backoff_ms() -> u64 {
    500
}

/// Connection and sampling settings for an OpenAI-compatible
/// chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Attempts after the first one.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// First retry delay; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

impl LlmConfig {
    pub fn new(endpoint_url: &str, model_name: &str, api_key_env: &str) -> Self {
        Self {
            endpoint_url: endpoint_url.to_owned(),
            model_name: model_name.to_owned(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            api_key_env: api_key_env.to_owned(),
            max_retries: default_max_retries(),
            parallelism: default_parallelism(),
            timeout_ms: default_timeout_ms(),
            retry_backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.temperature != 0.0 {
            return Err(format!("temperature must be 0, got {}", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body; serializes with fields in wire order and an integral
/// temperature written without a fraction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(serialize_with = "integral_when_whole")]
    pub temperature: f64,
    pub max_tokens: u32,
}

fn integral_when_whole<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        s.serialize_i64(*v as i64)
    } else {
        s.serialize_f64(*v)
    }
}

impl ChatRequest {
    pub fn new(config: &LlmConfig, prompt: String) -> Self {
        Self {
            model: config.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    /// Worth another attempt.
    Retry(AnnotatorError),
    Fatal(AnnotatorError),
}

pub struct LlmAnnotator {
    config: LlmConfig,
    client: reqwest::Client,
}

impl LlmAnnotator {
    pub fn new(config: LlmConfig) -> Result<Self, AnnotatorError> {
        config.validate().map_err(AnnotatorError::Transport)?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| AnnotatorError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn api_key(&self) -> Result<String, AnnotatorError> {
        match std::env::var(&self.config.api_key_env) {
            Ok(k) if !k.trim().is_empty() => Ok(k),
            _ => Err(AnnotatorError::Auth(format!(
                "environment variable {} is not set",
                self.config.api_key_env
            ))),
        }
    }

    pub async fn annotate_async(
        &self,
        requests: &[AnnotationRequest],
    ) -> Vec<Result<AnnotationResult, AnnotatorError>> {
        let key = match self.api_key() {
            Ok(k) => k,
            Err(e) => return requests.iter().map(|_| Err(e.clone())).collect(),
        };
        stream::iter(requests)
            .map(|r| self.annotate_one(&key, r))
            .buffered(self.config.parallelism)
            .collect()
            .await
    }

    async fn annotate_one(&self, key: &str, request: &AnnotationRequest) -> Result<AnnotationResult, AnnotatorError> {
        let body = ChatRequest::new(&self.config, build_prompt(request));
        let mut attempt = 0;
        loop {
            let started = Instant::now();
            let outcome = match self.call(key, &body).await {
                Ok(raw) => match parse_label(&raw, &request.label_set) {
                    Ok(label) => {
                        return Ok(AnnotationResult {
                            sample_id: request.sample_id.clone(),
                            label,
                            source: Source::Llm,
                            raw_response: Some(raw),
                            latency_ms: Some(started.elapsed().as_millis() as u64),
                        })
                    }
                    Err(e) => Failure::Retry(e),
                },
                Err(f) => f,
            };
            match outcome {
                Failure::Retry(e) if attempt < self.config.max_retries => {
                    log::warn!("sample {}: attempt {} failed: {e}", request.sample_id, attempt + 1);
                    let delay = self.config.retry_backoff_ms.saturating_mul(1 << attempt.min(16));
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                    attempt += 1;
                }
                Failure::Retry(e) | Failure::Fatal(e) => return Err(e),
            }
        }
    }

    async fn call(&self, key: &str, body: &ChatRequest) -> Result<String, Failure> {
        let bytes = serde_json::to_vec(body).map_err(|e| Failure::Fatal(AnnotatorError::Transport(e.to_string())))?;
        let response = self
            .client
            .post(&self.config.endpoint_url)
            .bearer_auth(key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(bytes)
            .send()
            .await
            .map_err(|e| Failure::Retry(AnnotatorError::Transport(e.to_string())))?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(Failure::Fatal(AnnotatorError::Auth(format!("endpoint answered {status}"))));
        }
        if !status.is_success() {
            let err = AnnotatorError::Transport(format!("endpoint answered {status}"));
            let transient = status.is_server_error()
                || status == reqwest::StatusCode::TOO_MANY_REQUESTS
                || status == reqwest::StatusCode::REQUEST_TIMEOUT;
            return Err(if transient { Failure::Retry(err) } else { Failure::Fatal(err) });
        }
        let parsed: ChatResponse = response
            .json()
            .await
            .map_err(|e| Failure::Retry(AnnotatorError::Transport(format!("bad response body: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| Failure::Retry(AnnotatorError::Transport("response has no choices".into())))
    }
}

impl Annotator for LlmAnnotator {
    fn source(&self) -> Source {
        Source::Llm
    }

    /// Runs on a private runtime in a scoped thread, so it is safe to call
    /// from inside another runtime's worker.
    fn annotate(&self, requests: &[AnnotationRequest]) -> Vec<Result<AnnotationResult, AnnotatorError>> {
        std::thread::scope(|s| {
            s.spawn(|| {
                let rt = match tokio::runtime::Builder::new_current_thread().enable_all().build() {
                    Ok(rt) => rt,
                    Err(e) => {
                        let err = AnnotatorError::Transport(format!("runtime: {e}"));
                        return requests.iter().map(|_| Err(err.clone())).collect();
                    }
                };
                rt.block_on(self.annotate_async(requests))
            })
            .join()
            .unwrap_or_else(|_| {
                requests
                    .iter()
                    .map(|_| Err(AnnotatorError::Transport("annotation thread panicked".into())))
                    .collect()
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_is_compact_with_integral_temperature() {
        let cfg = LlmConfig::new("http://x", "m", "K");
        let body = serde_json::to_string(&ChatRequest::new(&cfg, "hi".into())).unwrap();
        assert_eq!(
            body,
            r#"{"model":"m","messages":[{"role":"user","content":"hi"}],"temperature":0,"max_tokens":15}"#
        );
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: LlmConfig =
            serde_json::from_str(r#"{"endpoint_url":"http://x","model_name":"m","api_key_env":"K"}"#).unwrap();
        assert_eq!(cfg, LlmConfig::new("http://x", "m", "K"));
        assert!(cfg.validate().is_ok());
        let mut hot = cfg.clone();
        hot.temperature = 0.7;
        assert!(hot.validate().is_err());
        let mut none = cfg;
        none.parallelism = 0;
        assert!(LlmAnnotator::new(none).is_err());
    }
}
