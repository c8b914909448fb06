//! Fixed-size batching shared by the sentiment and topic agents, plus the
//! request/repair/retry loop both agents use to get one answer per post.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::gateway::json::{extract_json, repair_message};
use crate::gateway::{Gateway, GatewayError, LoadedPrompt};

pub const DEFAULT_BATCH_SIZE: NonZeroUsize = match NonZeroUsize::new(10) {
    Some(n) => n,
    None => unreachable!(),
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    pub batch_size: NonZeroUsize,
    /// Batches classified concurrently; results are always assembled in batch order.
    pub workers: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            workers: 4,
        }
    }
}

/// Splits `items` into consecutive batches of `batch_size`; only the last
/// batch may be shorter.
pub fn make_batches<T>(items: &[T], batch_size: NonZeroUsize) -> Vec<&[T]> {
    items.chunks(batch_size.get()).collect()
}

/// 1-based batch number of the item at 0-based `index`.
pub fn batch_number(index: usize, batch_size: NonZeroUsize) -> usize {
    index / batch_size.get() + 1
}

#[derive(Serialize)]
struct BatchPayload<'a> {
    task: &'a str,
    batch: usize,
    posts: Vec<PostEntry<'a>>,
}

#[derive(Serialize)]
struct PostEntry<'a> {
    id: usize,
    text: &'a str,
}

/// The user message for one batch: posts numbered from 1 within the batch.
/// `task` names the agent so the same batch sent to two agents gives two
/// distinct messages.
pub fn batch_user_text<S: AsRef<str>>(task: &str, batch_number: usize, texts: &[S]) -> String {
    let payload = BatchPayload {
        task,
        batch: batch_number,
        posts: texts
            .iter()
            .enumerate()
            .map(|(i, t)| PostEntry {
                id: i + 1,
                text: t.as_ref(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&payload).expect("payload serializes")
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("reply could not be parsed even after a repair re-prompt")]
    Unparseable { raw_response: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Per-post answers for one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aligned<T> {
    pub items: Vec<T>,
    /// `(expected, returned)` when the count still disagreed after the retry.
    pub mismatch: Option<(usize, usize)>,
}

fn ask_parsed<T>(
    gateway: &Gateway,
    prompt: &LoadedPrompt,
    user_text: &str,
    parse: &impl Fn(&Value) -> Option<Vec<T>>,
) -> Result<Vec<T>, BatchError> {
    let reply = gateway.chat(prompt, user_text)?;
    if let Some(items) = extract_json(&reply).as_ref().and_then(parse) {
        return Ok(items);
    }
    tracing::warn!(agent = %prompt.agent_name, "unparseable batch reply; re-prompting once");
    let repaired = gateway.chat(prompt, &repair_message(user_text))?;
    extract_json(&repaired)
        .as_ref()
        .and_then(parse)
        .ok_or(BatchError::Unparseable {
            raw_response: repaired,
        })
}

/// Requests one answer per post.
///
/// An unparseable reply gets one repair re-prompt. A reply with the wrong
/// number of answers triggers one retry of the whole batch; if the count is
/// still wrong the second reply is returned with `mismatch` set and the
/// caller applies its sentinel policy.
pub fn request_aligned<T>(
    gateway: &Gateway,
    prompt: &LoadedPrompt,
    user_text: &str,
    expected: usize,
    parse: impl Fn(&Value) -> Option<Vec<T>>,
) -> Result<Aligned<T>, BatchError> {
    let first = ask_parsed(gateway, prompt, user_text, &parse)?;
    if first.len() == expected {
        return Ok(Aligned {
            items: first,
            mismatch: None,
        });
    }
    tracing::warn!(
        agent = %prompt.agent_name,
        expected,
        got = first.len(),
        "answer count mismatch; retrying batch once"
    );
    let second = ask_parsed(gateway, prompt, user_text, &parse)?;
    let mismatch = (second.len() != expected).then_some((expected, second.len()));
    Ok(Aligned {
        items: second,
        mismatch,
    })
}

/// Finds the array of per-post answers in a reply: either the top-level
/// array or the first array under one of `keys`.
pub fn answer_array<'a>(value: &'a Value, keys: &[&str]) -> Option<&'a Vec<Value>> {
    if let Some(arr) = value.as_array() {
        return Some(arr);
    }
    let obj = value.as_object()?;
    keys.iter().find_map(|k| obj.get(*k).and_then(Value::as_array))
}

/// Orders answer objects by their `id` field when every element carries one.
pub fn order_by_id(items: &[Value]) -> Vec<&Value> {
    let ids: Option<Vec<u64>> = items
        .iter()
        .map(|v| v.get("id").and_then(Value::as_u64))
        .collect();
    let mut refs: Vec<&Value> = items.iter().collect();
    if let Some(ids) = ids {
        let mut indexed: Vec<(u64, &Value)> = ids.into_iter().zip(refs).collect();
        indexed.sort_by_key(|(id, _)| *id);
        refs = indexed.into_iter().map(|(_, v)| v).collect();
    }
    refs
}

/// Runs `job` over every batch on up to `workers` threads and returns the
/// results in batch order. On failure, the error of the lowest-numbered
/// failing batch is returned together with its 1-based batch number.
pub fn run_batches<T, R, E>(
    batches: &[&[T]],
    workers: usize,
    job: impl Fn(usize, &[T]) -> Result<R, E> + Sync,
) -> Result<Vec<R>, (usize, E)>
where
    T: Sync,
    R: Send,
    E: Send,
{
    let slots: Vec<Mutex<Option<Result<R, E>>>> = batches.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, batches.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(batch) = batches.get(i) else {
                    break;
                };
                let result = job(i + 1, batch);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    let mut out = Vec::with_capacity(batches.len());
    for (i, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().unwrap().expect("every batch runs") {
            Ok(r) => out.push(r),
            Err(e) => return Err((i + 1, e)),
        }
    }
    Ok(out)
}
