//! LLM completion gateways: a remote HTTP client and a scripted replay mock.

use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use url::Url;

use super::prompt::{prompt_attempt, prompt_question};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    /// Network-level failure; the caller may retry.
    #[error("LLM gateway unreachable: {0}")]
    Transport(String),
    #[error("LLM gateway returned an invalid response: {0}")]
    Protocol(String),
    #[error("mock replay: {0}")]
    Script(String),
}

#[async_trait]
pub trait LlmGateway: Send + Sync {
    fn model(&self) -> &str;

    /// True for replay gateways; reported by health checks.
    fn is_mock(&self) -> bool {
        false
    }

    /// Reachability check within `budget`; gateways without a network hop
    /// are always reachable.
    async fn probe(&self, _budget: Duration) -> bool {
        true
    }

    async fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpLlmConfig {
    pub url: Url,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_timeout_secs() -> u64 {
    60
}

/// `POST {model, prompt, temperature, max_tokens}` → `{text}`.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    config: HttpLlmConfig,
    http: reqwest::Client,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

impl HttpLlm {
    pub fn new(config: HttpLlmConfig) -> Self {
        Self {
            config,
            http: reqwest::Client::new(),
        }
    }
}

#[async_trait]
impl LlmGateway for HttpLlm {
    fn model(&self) -> &str {
        &self.config.model
    }

    async fn probe(&self, budget: Duration) -> bool {
        self.http
            .get(self.config.url.clone())
            .timeout(budget)
            .send()
            .await
            .is_ok()
    }

    async fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let response = self
            .http
            .post(self.config.url.clone())
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .json(&CompletionRequest {
                model: &self.config.model,
                prompt,
                temperature: self.config.temperature,
                max_tokens: self.config.max_tokens,
            })
            .send()
            .await
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(LlmError::Transport(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            return Err(LlmError::Protocol(format!("HTTP {}: {body}", status.as_u16())));
        }
        let parsed: CompletionResponse = response.json().await.map_err(|e| LlmError::Protocol(e.to_string()))?;
        Ok(parsed.text)
    }
}

/// One scripted reply; `{"transport_error": "..."}` simulates a network fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedResponse {
    Text(String),
    TransportError { transport_error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    /// Case-insensitive substring of the question.
    #[serde(rename = "match")]
    pub pattern: String,
    pub responses: Vec<ScriptedResponse>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Replay {
    #[serde(default)]
    pub scripts: Vec<Script>,
    #[serde(default)]
    pub default: Vec<ScriptedResponse>,
}

/// Replay gateway. The reply is picked by question (first matching script,
/// else `default`) and by the attempt number written into repair prompts,
/// so the mock keeps no state and concurrent callers do not interfere.
/// Attempts beyond the script repeat its last reply.
#[derive(Debug, Clone)]
pub struct ScriptedLlm {
    replay: Replay,
}

impl ScriptedLlm {
    pub fn new(replay: Replay) -> Self {
        Self { replay }
    }

    /// A single script answering every question.
    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(Replay {
            scripts: Vec::new(),
            default: responses.into_iter().map(|s| ScriptedResponse::Text(s.into())).collect(),
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Script(format!("cannot read {}: {e}", path.display())))?;
        let replay = serde_json::from_str(&text)
            .map_err(|e| LlmError::Script(format!("malformed replay {}: {e}", path.display())))?;
        Ok(Self::new(replay))
    }

    pub fn replay(&self) -> &Replay {
        &self.replay
    }

    fn responses_for(&self, question: &str) -> Option<&[ScriptedResponse]> {
        let q = question.to_lowercase();
        self.replay
            .scripts
            .iter()
            .find(|s| q.contains(&s.pattern.to_lowercase()))
            .map(|s| s.responses.as_slice())
            .or_else(|| (!self.replay.default.is_empty()).then_some(self.replay.default.as_slice()))
    }
}

#[async_trait]
impl LlmGateway for ScriptedLlm {
    fn model(&self) -> &str {
        "scripted-mock"
    }

    fn is_mock(&self) -> bool {
        true
    }

    async fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let question = prompt_question(prompt).unwrap_or(prompt);
        let responses = self
            .responses_for(question)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| LlmError::Script(format!("no scripted response for question '{question}'")))?;
        let index = prompt_attempt(prompt).saturating_sub(1).min(responses.len() - 1);
        match &responses[index] {
            ScriptedResponse::Text(text) => Ok(text.clone()),
            ScriptedResponse::TransportError { transport_error } => Err(LlmError::Transport(transport_error.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query_generator::prompt::{build_prompt, PriorError, PromptBundle};

    fn prompt(question: &str, attempt: Option<usize>) -> String {
        build_prompt(&PromptBundle {
            question: question.into(),
            templates: vec![],
            ontology_text: "Classes:\n".into(),
            prior_error: attempt.map(|a| PriorError {
                failed_query: "SELECT".into(),
                error: "boom".into(),
                attempt: a,
                max_attempts: 3,
            }),
        })
    }

    #[tokio::test]
    async fn picks_script_and_position() {
        let replay: Replay = serde_json::from_str(
            r#"{"scripts":[{"match":"Sensors","responses":["one","two"]}],"default":["fallback"]}"#,
        )
        .unwrap();
        let llm = ScriptedLlm::new(replay);
        assert_eq!(llm.complete(&prompt("list all sensors", None)).await.unwrap(), "one");
        assert_eq!(llm.complete(&prompt("list all sensors", Some(2))).await.unwrap(), "two");
        assert_eq!(llm.complete(&prompt("list all sensors", Some(3))).await.unwrap(), "two");
        assert_eq!(llm.complete(&prompt("platforms?", None)).await.unwrap(), "fallback");
    }

    #[tokio::test]
    async fn unmatched_question_is_an_error() {
        let llm = ScriptedLlm::new(Replay::default());
        assert!(matches!(llm.complete(&prompt("q", None)).await, Err(LlmError::Script(_))));
    }

    #[tokio::test]
    async fn scripted_transport_fault() {
        let replay: Replay = serde_json::from_str(r#"{"default":[{"transport_error":"reset"}]}"#).unwrap();
        let llm = ScriptedLlm::new(replay);
        assert_eq!(
            llm.complete(&prompt("q", None)).await,
            Err(LlmError::Transport("reset".into()))
        );
    }
}
