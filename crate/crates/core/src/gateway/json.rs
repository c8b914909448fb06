//! Lenient extraction of a JSON value from an LLM reply.
//!
//! Models often wrap JSON in code fences or surround it with prose. This
//! strips fences, then falls back to the outermost `{...}` or `[...]` span.

use serde_json::Value;

/// Appended to a user message when a reply could not be parsed.
pub const REPAIR_INSTRUCTION: &str =
    "Your previous reply could not be parsed. Return only the JSON in the requested format, with no other text.";

pub fn repair_message(user_text: &str) -> String {
    format!("{user_text}\n\n{REPAIR_INSTRUCTION}")
}

pub fn extract_json(reply: &str) -> Option<Value> {
    let trimmed = reply.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    if let Some(inner) = strip_fence(trimmed) {
        if let Ok(v) = serde_json::from_str(inner.trim()) {
            return Some(v);
        }
    }
    outermost_span(trimmed).and_then(|span| serde_json::from_str(span).ok())
}

fn strip_fence(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // skip an info string such as ```json
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

fn outermost_span(text: &str) -> Option<&str> {
    let open = text.find(['{', '['])?;
    let close_char = if text.as_bytes()[open] == b'{' { '}' } else { ']' };
    let close = text.rfind(close_char)?;
    (close > open).then(|| &text[open..=close])
}
