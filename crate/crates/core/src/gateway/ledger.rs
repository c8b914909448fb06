//! Append-only record of every LLM exchange in a run.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::message_digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExchangeOutcome {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub agent: String,
    pub attempt: u32,
    pub system_text: String,
    pub user_text: String,
    pub response_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub outcome: ExchangeOutcome,
}

impl ChatExchange {
    pub fn succeeded(&self) -> bool {
        self.outcome == ExchangeOutcome::Ok
    }
}

/// Per-1K-token prices. Configuration, not a pricing authority.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

impl PriceTable {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        prompt_tokens as f64 / 1000.0 * self.prompt_per_1k
            + completion_tokens as f64 / 1000.0 * self.completion_per_1k
    }
}

#[derive(Debug)]
struct JsonlSink {
    file: File,
    sidecar_dir: PathBuf,
    max_inline_response: usize,
}

/// Thread-safe ledger. Exchanges are never mutated once recorded.
///
/// When a sink is attached, each exchange is also appended to a JSON-lines
/// file as it is recorded. Responses longer than the inline limit are
/// written to a sidecar file and the line carries a reference instead.
#[derive(Debug, Default)]
pub struct CostLedger {
    exchanges: Mutex<Vec<ChatExchange>>,
    prices: PriceTable,
    sink: Mutex<Option<JsonlSink>>,
}

#[derive(Serialize)]
struct LedgerLine<'a> {
    #[serde(flatten)]
    exchange: &'a ChatExchange,
    #[serde(skip_serializing_if = "Option::is_none")]
    response_ref: Option<String>,
}

impl CostLedger {
    pub fn new(prices: PriceTable) -> Self {
        Self {
            prices,
            ..Self::default()
        }
    }

    /// Attaches a JSON-lines sink, appending to `path` if it already exists.
    pub fn attach_jsonl(&self, path: &Path, max_inline_response: usize) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let sidecar_dir = path.with_extension("sidecar");
        *self.sink.lock().unwrap() = Some(JsonlSink {
            file,
            sidecar_dir,
            max_inline_response,
        });
        Ok(())
    }

    pub fn record(&self, exchange: ChatExchange) {
        let mut exchanges = self.exchanges.lock().unwrap();
        if let Some(sink) = self.sink.lock().unwrap().as_mut() {
            if let Err(err) = write_line(sink, &exchange) {
                tracing::warn!(%err, "failed to append ledger line");
            }
        }
        exchanges.push(exchange);
    }

    pub fn total_invocations(&self) -> usize {
        self.exchanges.lock().unwrap().len()
    }

    pub fn snapshot(&self) -> Vec<ChatExchange> {
        self.exchanges.lock().unwrap().clone()
    }

    pub fn total_tokens(&self) -> (u64, u64) {
        self.exchanges
            .lock()
            .unwrap()
            .iter()
            .fold((0, 0), |(p, c), e| (p + e.prompt_tokens, c + e.completion_tokens))
    }

    pub fn estimated_cost(&self) -> f64 {
        let (p, c) = self.total_tokens();
        self.prices.cost(p, c)
    }
}

fn write_line(sink: &mut JsonlSink, exchange: &ChatExchange) -> std::io::Result<()> {
    let line = if exchange.response_text.len() > sink.max_inline_response {
        fs::create_dir_all(&sink.sidecar_dir)?;
        let name = format!("{}.txt", message_digest(&exchange.response_text));
        let path = sink.sidecar_dir.join(&name);
        fs::write(&path, &exchange.response_text)?;
        let mut trimmed = exchange.clone();
        trimmed.response_text = String::new();
        serde_json::to_string(&LedgerLine {
            exchange: &trimmed,
            response_ref: Some(path.display().to_string()),
        })?
    } else {
        serde_json::to_string(&LedgerLine {
            exchange,
            response_ref: None,
        })?
    };
    writeln!(sink.file, "{line}")?;
    sink.file.flush()
}

/// Counts the lines of an exported ledger.
pub fn count_jsonl_exchanges(path: &Path) -> std::io::Result<usize> {
    let file = File::open(path)?;
    let mut n = 0;
    for line in BufReader::new(file).lines() {
        if !line?.trim().is_empty() {
            n += 1;
        }
    }
    Ok(n)
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
