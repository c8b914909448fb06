//! Shared LLM plumbing: prompt loading, the chat gateway with retry and
//! accounting, a live OpenAI-compatible client and a scripted mock.
//!
//! Agents never talk to a backend directly; every request goes through
//! [`Gateway::chat`], which enforces the concurrency cap, retries transient
//! failures and records each attempt in the [`CostLedger`].

mod backend;
pub mod json;
mod ledger;
pub mod mock;
pub mod openai;
mod prompts;

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use backend::{
    estimate_tokens, message_digest, BackendError, ChatBackend, ChatCompletion, ChatRequest,
};
pub use ledger::{count_jsonl_exchanges, ChatExchange, CostLedger, ExchangeOutcome, PriceTable};
pub use mock::{Fault, MockScriptWriter, ScriptedMock};
pub use openai::{OpenAiBackend, OpenAiConfig};
pub use prompts::{load_prompts, LoadedPrompt, PromptError, PromptRole, PromptSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub const DEFAULT_ATTEMPTS: u32 = 3;

    pub fn live() -> Self {
        Self {
            max_attempts: Self::DEFAULT_ATTEMPTS,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
        }
    }

    /// Same attempt budget, no sleeping.
    pub fn immediate() -> Self {
        Self {
            max_attempts: Self::DEFAULT_ATTEMPTS,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before attempt `attempt + 1`, given that `attempt` (1-based) failed.
    pub fn backoff(&self, attempt: u32, hint: Option<Duration>) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32 << (attempt.saturating_sub(1)).min(16));
        hint.unwrap_or(exp).min(self.max_delay)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self::live()
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("LLM backend unavailable after {attempts} attempts: {last}")]
    BackendUnavailable { attempts: u32, last: BackendError },
    #[error("LLM request failed: {0}")]
    Rejected(BackendError),
}

/// Counting semaphore capping concurrent backend requests.
#[derive(Debug)]
struct RequestLimiter {
    available: Mutex<usize>,
    cv: Condvar,
}

impl RequestLimiter {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a RequestLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Cloneable handle through which all LLM traffic flows.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    ledger: Arc<CostLedger>,
    retry: RetryPolicy,
    limiter: Arc<RequestLimiter>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, ledger: Arc<CostLedger>) -> Self {
        Self {
            backend,
            ledger,
            retry: RetryPolicy::default(),
            limiter: Arc::new(RequestLimiter::new(4)),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_concurrent(mut self, permits: usize) -> Self {
        self.limiter = Arc::new(RequestLimiter::new(permits));
        self
    }

    pub fn ledger(&self) -> &Arc<CostLedger> {
        &self.ledger
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Sends `prompt.body` as the system message and `user_text` as the user
    /// message, returning the reply verbatim.
    ///
    /// Transient failures are retried with exponential backoff up to the
    /// policy's attempt budget. Every attempt is ledgered.
    pub fn chat(&self, prompt: &LoadedPrompt, user_text: &str) -> Result<String, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let started = Instant::now();
            let result = {
                let _permit = self.limiter.acquire();
                self.backend.complete(ChatRequest {
                    system: &prompt.body,
                    user: user_text,
                })
            };
            let latency = started.elapsed();
            match result {
                Ok(completion) => {
                    self.ledger.record(ChatExchange {
                        agent: prompt.agent_name.clone(),
                        attempt,
                        system_text: prompt.body.clone(),
                        user_text: user_text.to_string(),
                        response_text: completion.text.clone(),
                        prompt_tokens: completion.prompt_tokens,
                        completion_tokens: completion.completion_tokens,
                        latency,
                        outcome: ExchangeOutcome::Ok,
                    });
                    return Ok(completion.text);
                }
                Err(err) => {
                    self.ledger.record(ChatExchange {
                        agent: prompt.agent_name.clone(),
                        attempt,
                        system_text: prompt.body.clone(),
                        user_text: user_text.to_string(),
                        response_text: String::new(),
                        prompt_tokens: 0,
                        completion_tokens: 0,
                        latency,
                        outcome: ExchangeOutcome::Failed {
                            error: err.to_string(),
                        },
                    });
                    if !err.is_retryable() {
                        return Err(GatewayError::Rejected(err));
                    }
                    if attempt >= self.retry.max_attempts {
                        return Err(GatewayError::BackendUnavailable {
                            attempts: attempt,
                            last: err,
                        });
                    }
                    let delay = self.retry.backoff(attempt, err.retry_after());
                    tracing::warn!(agent = %prompt.agent_name, attempt, ?delay, %err, "retrying LLM request");
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                }
            }
        }
    }
}
