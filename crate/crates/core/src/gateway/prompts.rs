//! Prompt-file loading.
//!
//! Every agent role is initialized from a plain-text prompt file. The five
//! core prompts must all be present; two extension prompts (topic
//! consolidation and report synthesis) are optional and the stages that use
//! them degrade gracefully when they are absent.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    Coordinator,
    Sentiment,
    Topic,
    ReportSentimentSummarizer,
    ReportTopicSummarizer,
    TopicConsolidator,
    ReportSynthesizer,
}

impl PromptRole {
    /// Roles whose prompt file is required for the pipeline to start.
    pub const CORE: [PromptRole; 5] = [
        PromptRole::Coordinator,
        PromptRole::Sentiment,
        PromptRole::Topic,
        PromptRole::ReportSentimentSummarizer,
        PromptRole::ReportTopicSummarizer,
    ];

    pub const EXTENSIONS: [PromptRole; 2] =
        [PromptRole::TopicConsolidator, PromptRole::ReportSynthesizer];

    pub fn file_name(self) -> &'static str {
        match self {
            PromptRole::Coordinator => "agent0_coordinator.txt",
            PromptRole::Sentiment => "agent1_sentiment.txt",
            PromptRole::Topic => "agent2_topic.txt",
            PromptRole::ReportSentimentSummarizer => "agent3_sentiment_summarizer.txt",
            PromptRole::ReportTopicSummarizer => "agent3_topic_summarizer.txt",
            PromptRole::TopicConsolidator => "agent2_topic_consolidator.txt",
            PromptRole::ReportSynthesizer => "agent3_report_synthesizer.txt",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptRole::Coordinator => "coordinator",
            PromptRole::Sentiment => "sentiment",
            PromptRole::Topic => "topic",
            PromptRole::ReportSentimentSummarizer => "report_sentiment_summarizer",
            PromptRole::ReportTopicSummarizer => "report_topic_summarizer",
            PromptRole::TopicConsolidator => "topic_consolidator",
            PromptRole::ReportSynthesizer => "report_synthesizer",
        }
    }

    pub fn is_core(self) -> bool {
        Self::CORE.contains(&self)
    }
}

impl fmt::Display for PromptRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A prompt file loaded verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedPrompt {
    pub role: PromptRole,
    pub agent_name: String,
    pub body: String,
    pub source_path: PathBuf,
}

impl LoadedPrompt {
    /// Builds a prompt from an in-memory body. Mostly useful in tests.
    pub fn inline(role: PromptRole, body: impl Into<String>) -> Self {
        Self {
            role,
            agent_name: role.as_str().to_string(),
            body: body.into(),
            source_path: PathBuf::from(format!("<inline:{}>", role.file_name())),
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("required prompt file {file} is missing from {dir}")]
    MissingFile { file: &'static str, dir: PathBuf },
    #[error("prompt file {file} is empty")]
    EmptyFile { file: &'static str },
    #[error("failed to read prompt file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The prompts for one installation, keyed by role.
#[derive(Debug, Clone, Default)]
pub struct PromptSet {
    prompts: BTreeMap<PromptRole, LoadedPrompt>,
}

impl PromptSet {
    pub fn get(&self, role: PromptRole) -> Option<&LoadedPrompt> {
        self.prompts.get(&role)
    }

    /// Returns a core prompt. Core prompts are guaranteed present by [`load_prompts`].
    pub fn core(&self, role: PromptRole) -> &LoadedPrompt {
        debug_assert!(role.is_core());
        self.prompts
            .get(&role)
            .expect("core prompts are validated at load time")
    }

    pub fn core_count(&self) -> usize {
        self.prompts.keys().filter(|r| r.is_core()).count()
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PromptRole, &LoadedPrompt)> {
        self.prompts.iter()
    }

    pub fn insert(&mut self, prompt: LoadedPrompt) {
        self.prompts.insert(prompt.role, prompt);
    }
}

/// Loads every prompt from `directory`.
///
/// Fails on the first missing or empty core prompt, naming the file. Extension
/// prompts are loaded when present; an empty extension file is still an error.
pub fn load_prompts(directory: &Path) -> Result<PromptSet, PromptError> {
    if !directory.is_dir() {
        return Err(PromptError::MissingDirectory(directory.to_path_buf()));
    }
    let mut set = PromptSet::default();
    for role in PromptRole::CORE.into_iter().chain(PromptRole::EXTENSIONS) {
        let path = directory.join(role.file_name());
        if !path.exists() {
            if role.is_core() {
                return Err(PromptError::MissingFile {
                    file: role.file_name(),
                    dir: directory.to_path_buf(),
                });
            }
            continue;
        }
        let body = fs::read_to_string(&path).map_err(|source| PromptError::Io {
            path: path.clone(),
            source,
        })?;
        if body.trim().is_empty() {
            return Err(PromptError::EmptyFile {
                file: role.file_name(),
            });
        }
        set.insert(LoadedPrompt {
            role,
            agent_name: role.as_str().to_string(),
            body,
            source_path: path,
        });
    }
    Ok(set)
}
