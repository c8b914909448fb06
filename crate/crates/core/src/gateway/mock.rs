//! Deterministic scripted backend for offline runs and golden tests.
//!
//! Responses are keyed by the SHA-256 digest of the user message. On disk a
//! script directory looks like:
//!
//! ```text
//! mock/
//!   responses/<digest>.txt   one scripted reply per user message
//!   default.txt              optional reply for unscripted messages
//!   faults.json              optional fault schedule
//! ```
//!
//! The fault schedule maps a digest to a queue of faults consumed one per
//! call before the scripted reply is served:
//!
//! ```json
//! { "3fa1...": ["rate_limit", "transport", {"respond": "not json"}] }
//! ```

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{
    estimate_tokens, message_digest, BackendError, ChatBackend, ChatCompletion, ChatRequest,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    RateLimit,
    Transport,
    ServerError,
    /// Serve this text instead of the scripted reply for one call.
    Respond(String),
}

#[derive(Debug, Error)]
pub enum MockScriptError {
    #[error("mock script directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid fault schedule {path}: {source}")]
    Faults {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Default)]
pub struct ScriptedMock {
    responses: HashMap<String, String>,
    default_response: Option<String>,
    faults: Mutex<HashMap<String, VecDeque<Fault>>>,
    calls: AtomicUsize,
}

impl ScriptedMock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, user_text: &str, response: impl Into<String>) -> Self {
        self.responses
            .insert(message_digest(user_text), response.into());
        self
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default_response = Some(response.into());
        self
    }

    pub fn with_faults(self, user_text: &str, faults: impl IntoIterator<Item = Fault>) -> Self {
        self.faults
            .lock()
            .unwrap()
            .entry(message_digest(user_text))
            .or_default()
            .extend(faults);
        self
    }

    pub fn insert_response(&mut self, user_text: &str, response: impl Into<String>) {
        self.responses
            .insert(message_digest(user_text), response.into());
    }

    pub fn from_dir(dir: &Path) -> Result<Self, MockScriptError> {
        if !dir.is_dir() {
            return Err(MockScriptError::MissingDirectory(dir.to_path_buf()));
        }
        let read = |path: &Path| {
            fs::read_to_string(path).map_err(|source| MockScriptError::Io {
                path: path.to_path_buf(),
                source,
            })
        };

        let mut mock = ScriptedMock::new();
        let responses_dir = dir.join("responses");
        if responses_dir.is_dir() {
            let entries = fs::read_dir(&responses_dir).map_err(|source| MockScriptError::Io {
                path: responses_dir.clone(),
                source,
            })?;
            for entry in entries {
                let path = entry
                    .map_err(|source| MockScriptError::Io {
                        path: responses_dir.clone(),
                        source,
                    })?
                    .path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let Some(digest) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                mock.responses.insert(digest.to_string(), read(&path)?);
            }
        }

        let default_path = dir.join("default.txt");
        if default_path.exists() {
            mock.default_response = Some(read(&default_path)?);
        }

        let faults_path = dir.join("faults.json");
        if faults_path.exists() {
            let text = read(&faults_path)?;
            let schedule: HashMap<String, Vec<Fault>> =
                serde_json::from_str(&text).map_err(|source| MockScriptError::Faults {
                    path: faults_path.clone(),
                    source,
                })?;
            let mut faults = mock.faults.lock().unwrap();
            for (digest, list) in schedule {
                faults.insert(digest, list.into());
            }
        }
        Ok(mock)
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn scripted_len(&self) -> usize {
        self.responses.len()
    }
}

impl ChatBackend for ScriptedMock {
    fn complete(&self, request: ChatRequest<'_>) -> Result<ChatCompletion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = message_digest(request.user);

        let fault = self
            .faults
            .lock()
            .unwrap()
            .get_mut(&digest)
            .and_then(VecDeque::pop_front);
        let text = match fault {
            Some(Fault::RateLimit) => {
                return Err(BackendError::RateLimited {
                    message: "scripted rate limit".into(),
                    retry_after: None,
                })
            }
            Some(Fault::Transport) => {
                return Err(BackendError::Transport("scripted connection reset".into()))
            }
            Some(Fault::ServerError) => {
                return Err(BackendError::Server {
                    status: 500,
                    body: "scripted server error".into(),
                })
            }
            Some(Fault::Respond(text)) => text,
            None => match self
                .responses
                .get(&digest)
                .or(self.default_response.as_ref())
            {
                Some(text) => text.clone(),
                None => return Err(BackendError::NotScripted { digest }),
            },
        };

        Ok(ChatCompletion {
            prompt_tokens: estimate_tokens(request.system) + estimate_tokens(request.user),
            completion_tokens: estimate_tokens(&text),
            text,
        })
    }

    fn name(&self) -> &str {
        "scripted-mock"
    }
}

/// Writes a script directory readable by [`ScriptedMock::from_dir`].
#[derive(Debug)]
pub struct MockScriptWriter {
    dir: PathBuf,
    faults: HashMap<String, Vec<Fault>>,
}

impl MockScriptWriter {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir.join("responses"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            faults: HashMap::new(),
        })
    }

    pub fn respond(&mut self, user_text: &str, response: &str) -> std::io::Result<()> {
        let path = self
            .dir
            .join("responses")
            .join(format!("{}.txt", message_digest(user_text)));
        fs::write(path, response)
    }

    pub fn default_response(&mut self, response: &str) -> std::io::Result<()> {
        fs::write(self.dir.join("default.txt"), response)
    }

    pub fn fault(&mut self, user_text: &str, faults: impl IntoIterator<Item = Fault>) {
        self.faults
            .entry(message_digest(user_text))
            .or_default()
            .extend(faults);
    }

    pub fn finish(self) -> std::io::Result<()> {
        if self.faults.is_empty() {
            return Ok(());
        }
        let mut sorted: Vec<_> = self.faults.into_iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let map: serde_json::Map<String, serde_json::Value> = sorted
            .into_iter()
            .map(|(k, v)| (k, serde_json::to_value(v).expect("faults serialize")))
            .collect();
        fs::write(
            self.dir.join("faults.json"),
            serde_json::to_string_pretty(&map)?,
        )
    }
}
