//! Sentiment agent: label every post positive, neutral or negative in
//! batches, keeping any non-canonical label the model chooses.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::batching::{
    answer_array, batch_number, batch_user_text, make_batches, order_by_id, request_aligned,
    run_batches, AgentConfig, BatchError,
};
use crate::collector::PostRecord;
use crate::gateway::{Gateway, LoadedPrompt};

/// Task name carried in every batch request.
pub const SENTIMENT_TASK: &str = "sentiment";
pub const SENTIMENT_CSV: &str = "Sentiment_analysis_result.csv";
pub const SENTIMENT_HEADER: [&str; 3] = ["batch_number", "post_text", "sentiment"];

/// Lower-cased, trimmed sentiment label. Canonical labels are positive,
/// neutral and negative; anything else the model returns is kept as-is.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentimentLabel(String);

impl SentimentLabel {
    pub const CANONICAL: [&'static str; 3] = ["positive", "neutral", "negative"];
    /// Assigned to posts the model never answered for.
    pub const UNLABELED: &'static str = "unlabeled";

    pub fn normalize(raw: &str) -> Self {
        let label = raw.trim().to_lowercase();
        if label.is_empty() {
            Self(Self::UNLABELED.to_string())
        } else {
            Self(label)
        }
    }

    pub fn unlabeled() -> Self {
        Self(Self::UNLABELED.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_canonical(&self) -> bool {
        Self::CANONICAL.contains(&self.0.as_str())
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentRecord {
    pub batch_number: usize,
    pub post_text: String,
    pub sentiment: SentimentLabel,
}

/// Label distribution over the emitted records.
///
/// `counts` has exactly one entry per post. `surplus` tallies labels the
/// model returned beyond the number of posts in a batch; they are not
/// attached to any post but are kept so the raw model output is not lost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentSummary {
    pub counts: BTreeMap<String, usize>,
    pub total_posts: usize,
    #[serde(default)]
    pub surplus: BTreeMap<String, usize>,
}

impl SentimentSummary {
    pub fn from_records(records: &[SentimentRecord]) -> Self {
        let mut counts = BTreeMap::new();
        for r in records {
            *counts.entry(r.sentiment.as_str().to_string()).or_insert(0) += 1;
        }
        Self {
            counts,
            total_posts: records.len(),
            surplus: BTreeMap::new(),
        }
    }

    pub fn count(&self, label: &str) -> usize {
        self.counts.get(label).copied().unwrap_or(0)
    }

    /// Per-post counts plus surplus labels: every label the model produced.
    pub fn label_tally(&self) -> BTreeMap<String, usize> {
        let mut tally = self.counts.clone();
        for (label, n) in &self.surplus {
            *tally.entry(label.clone()).or_insert(0) += n;
        }
        tally
    }

    pub fn surplus_total(&self) -> usize {
        self.surplus.values().sum()
    }

    /// Whether the per-post counts add up to the post count.
    pub fn is_consistent(&self) -> bool {
        self.counts.values().sum::<usize>() == self.total_posts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchLabels {
    pub labels: Vec<SentimentLabel>,
    pub surplus: Vec<SentimentLabel>,
    pub warning: Option<String>,
}

fn parse_labels(value: &Value) -> Option<Vec<SentimentLabel>> {
    let items = answer_array(value, &["labels", "sentiments", "results", "posts"])?;
    order_by_id(items)
        .into_iter()
        .map(|item| match item {
            Value::String(s) => Some(SentimentLabel::normalize(s)),
            Value::Object(o) => ["sentiment", "label"]
                .iter()
                .find_map(|k| o.get(*k).and_then(Value::as_str))
                .map(SentimentLabel::normalize),
            _ => None,
        })
        .collect()
}

/// Labels one batch, one label per post in batch order.
///
/// When the label count is still wrong after one retry, missing trailing
/// labels become `unlabeled` and extra labels are moved to `surplus`.
pub fn classify_batch<S: AsRef<str>>(
    batch_number: usize,
    batch: &[S],
    prompt: &LoadedPrompt,
    gateway: &Gateway,
) -> Result<BatchLabels, BatchError> {
    let user_text = batch_user_text(SENTIMENT_TASK, batch_number, batch);
    let aligned = request_aligned(gateway, prompt, &user_text, batch.len(), parse_labels)?;
    let mut labels = aligned.items;
    let mut surplus = Vec::new();
    let warning = aligned.mismatch.map(|(expected, got)| {
        if got < expected {
            labels.resize(expected, SentimentLabel::unlabeled());
            format!(
                "batch {batch_number}: {got} labels for {expected} posts; trailing posts marked unlabeled"
            )
        } else {
            surplus = labels.split_off(expected);
            format!(
                "batch {batch_number}: {got} labels for {expected} posts; {} surplus label(s) kept in the tally",
                got - expected
            )
        }
    });
    if let Some(w) = &warning {
        tracing::warn!("{w}");
    }
    Ok(BatchLabels {
        labels,
        surplus,
        warning,
    })
}

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("sentiment batch {batch} failed: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: BatchError,
    },
    #[error("sentiment CSV error at {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone)]
pub struct SentimentOutcome {
    pub records: Vec<SentimentRecord>,
    pub summary: SentimentSummary,
    pub warnings: Vec<String>,
}

/// Labels every post and returns records in input order.
pub fn classify_posts(
    posts: &[PostRecord],
    prompt: &LoadedPrompt,
    gateway: &Gateway,
    config: &AgentConfig,
) -> Result<SentimentOutcome, SentimentError> {
    let texts: Vec<&str> = posts.iter().map(|p| p.text.as_str()).collect();
    let batches = make_batches(&texts, config.batch_size);
    let results = run_batches(&batches, config.workers, |n, batch| {
        classify_batch(n, batch, prompt, gateway)
    })
    .map_err(|(batch, source)| SentimentError::Batch { batch, source })?;

    let mut labels = Vec::with_capacity(posts.len());
    let mut surplus = BTreeMap::new();
    let mut warnings = Vec::new();
    for batch in results {
        for s in &batch.surplus {
            *surplus.entry(s.as_str().to_string()).or_insert(0) += 1;
        }
        warnings.extend(batch.warning);
        labels.extend(batch.labels);
    }
    let records: Vec<SentimentRecord> = texts
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (text, sentiment))| SentimentRecord {
            batch_number: batch_number(i, config.batch_size),
            post_text: text.to_string(),
            sentiment,
        })
        .collect();

    let mut summary = SentimentSummary::from_records(&records);
    summary.surplus = surplus;
    tracing::info!(counts = ?summary.counts, surplus = ?summary.surplus, "sentiment distribution");
    Ok(SentimentOutcome {
        records,
        summary,
        warnings,
    })
}

/// [`classify_posts`], then write `Sentiment_analysis_result.csv` to `out_path`.
pub fn run_sentiment(
    posts: &[PostRecord],
    prompt: &LoadedPrompt,
    gateway: &Gateway,
    config: &AgentConfig,
    out_path: &Path,
) -> Result<SentimentOutcome, SentimentError> {
    let outcome = classify_posts(posts, prompt, gateway, config)?;
    write_sentiment_csv(out_path, &outcome.records).map_err(|source| SentimentError::Csv {
        path: out_path.display().to_string(),
        source,
    })?;
    Ok(outcome)
}

pub fn write_sentiment_csv(path: &Path, records: &[SentimentRecord]) -> Result<(), csv::Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(SENTIMENT_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sentiment_csv(path: &Path) -> Result<Vec<SentimentRecord>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    check_header(r.headers()?, &SENTIMENT_HEADER, path)?;
    r.deserialize().collect()
}

pub(crate) fn check_header(
    header: &csv::StringRecord,
    expected: &[&str],
    path: &Path,
) -> Result<(), csv::Error> {
    if header.iter().ne(expected.iter().copied()) {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header in {}: {:?}", path.display(), header),
        )));
    }
    Ok(())
}
