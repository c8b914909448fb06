//! Blocking client for any OpenAI-compatible `/chat/completions` endpoint.

use std::env;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::backend::{BackendError, ChatBackend, ChatCompletion, ChatRequest};

pub const ENV_API_KEY: &str = "OPINIONFLOW_API_KEY";
pub const ENV_BASE_URL: &str = "OPINIONFLOW_BASE_URL";
pub const ENV_MODEL: &str = "OPINIONFLOW_MODEL";
pub const ENV_TEMPERATURE: &str = "OPINIONFLOW_TEMPERATURE";

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: Option<f64>,
    pub timeout: Duration,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("environment variable {0} must be set for the live backend")]
    Missing(&'static str),
    #[error("environment variable {var} has an invalid value: {value}")]
    Invalid { var: &'static str, value: String },
}

impl OpenAiConfig {
    /// Reads endpoint settings from the environment.
    ///
    /// The model has no default; deterministic output needs an explicit choice.
    /// `OPENAI_API_KEY` is accepted when `OPINIONFLOW_API_KEY` is unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        let model = env::var(ENV_MODEL).map_err(|_| ConfigError::Missing(ENV_MODEL))?;
        let api_key = env::var(ENV_API_KEY)
            .or_else(|_| env::var("OPENAI_API_KEY"))
            .ok();
        let base_url = env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        let temperature = match env::var(ENV_TEMPERATURE) {
            Ok(v) => Some(v.parse().map_err(|_| ConfigError::Invalid {
                var: ENV_TEMPERATURE,
                value: v,
            })?),
            Err(_) => Some(0.0),
        };
        Ok(Self {
            base_url,
            api_key,
            model,
            temperature,
            timeout: Duration::from_secs(120),
        })
    }
}

pub struct OpenAiBackend {
    config: OpenAiConfig,
    agent: ureq::Agent,
}

impl OpenAiBackend {
    pub fn new(config: OpenAiConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, request: ChatRequest<'_>) -> Result<ChatCompletion, BackendError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }

        let mut req = self
            .agent
            .post(&self.endpoint())
            .set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }

        let response = match req.send_json(body) {
            Ok(resp) => resp,
            Err(ureq::Error::Status(status, resp)) => {
                let retry_after = resp
                    .header("Retry-After")
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                let text = resp.into_string().unwrap_or_default();
                return Err(match status {
                    429 => BackendError::RateLimited {
                        message: text,
                        retry_after,
                    },
                    500..=599 => BackendError::Server { status, body: text },
                    _ => BackendError::Rejected { status, body: text },
                });
            }
            Err(ureq::Error::Transport(t)) => return Err(BackendError::Transport(t.to_string())),
        };

        let parsed: CompletionResponse = response
            .into_json()
            .map_err(|e| BackendError::InvalidPayload(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::InvalidPayload("no choices in response".into()))?;
        let (prompt_tokens, completion_tokens) = parsed
            .usage
            .map(|u| (u.prompt_tokens, u.completion_tokens))
            .unwrap_or((0, 0));
        Ok(ChatCompletion {
            text,
            prompt_tokens,
            completion_tokens,
        })
    }

    fn name(&self) -> &str {
        "openai-compatible"
    }
}
