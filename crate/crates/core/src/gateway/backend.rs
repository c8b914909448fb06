use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// One system+user chat request.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub system: &'a str,
    pub user: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatCompletion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("rate limited: {message}")]
    RateLimited {
        message: String,
        retry_after: Option<Duration>,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server error {status}: {body}")]
    Server { status: u16, body: String },
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed completion payload: {0}")]
    InvalidPayload(String),
    #[error("no scripted response for user message digest {digest}")]
    NotScripted { digest: String },
}

impl BackendError {
    /// Whether the gateway should back off and try again.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::RateLimited { .. }
                | BackendError::Transport(_)
                | BackendError::Server { .. }
        )
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            BackendError::RateLimited { retry_after, .. } => *retry_after,
            _ => None,
        }
    }
}

/// Anything that can answer a chat request: a live endpoint or a scripted mock.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: ChatRequest<'_>) -> Result<ChatCompletion, BackendError>;

    fn name(&self) -> &str;
}

/// Stable key for a user message, used to script mock responses.
pub fn message_digest(user_text: &str) -> String {
    hex::encode(Sha256::digest(user_text.as_bytes()))
}

/// Rough token estimate for backends that do not report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
