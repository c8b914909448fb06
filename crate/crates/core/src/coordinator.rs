//! Query parsing: one free-form request in, one validated [`QuerySpec`] out.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::json::{extract_json, repair_message};
use crate::gateway::{Gateway, GatewayError, LoadedPrompt};

/// Social-media platform a query targets. Only Sina Weibo is supported;
/// anything else is carried as `Unsupported` so validation can name it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Platform {
    SinaWeibo,
    Unsupported(String),
}

impl Platform {
    pub fn normalize(raw: &str) -> Platform {
        let key: String = raw
            .trim()
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "weibo" | "sinaweibo" | "weibo.com" | "新浪微博" | "微博" => Platform::SinaWeibo,
            _ => Platform::Unsupported(raw.trim().to_string()),
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Platform::SinaWeibo => "sina_weibo",
            Platform::Unsupported(name) => name,
        }
    }

    pub fn is_supported(&self) -> bool {
        matches!(self, Platform::SinaWeibo)
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl Serialize for Platform {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for Platform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Platform::normalize(&String::deserialize(d)?))
    }
}

/// Structured collection parameters. Dates are platform-local calendar days;
/// `end_date` is inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub event_keywords: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub platform: Platform,
}

impl QuerySpec {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("QuerySpec serializes")
    }
}

#[derive(Debug, Error)]
pub enum CoordinatorError {
    #[error("could not parse a JSON object from the LLM reply")]
    ParseFailure { raw_response: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Checks the [`QuerySpec`] invariants, reporting the first violation.
pub fn validate_spec(spec: QuerySpec) -> Result<QuerySpec, CoordinatorError> {
    if spec.event_keywords.trim().is_empty() {
        return Err(CoordinatorError::InvalidQuery("empty event_keywords".into()));
    }
    if spec.start_date > spec.end_date {
        return Err(CoordinatorError::InvalidQuery("start_date > end_date".into()));
    }
    if !spec.platform.is_supported() {
        return Err(CoordinatorError::InvalidQuery(format!(
            "unsupported platform: {}",
            spec.platform
        )));
    }
    Ok(spec)
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

/// Parses `YYYY.M.D`, `YYYY-MM-DD` or `Month D, YYYY`. Anything else is `None`.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    if let Some(d) = parse_numeric(s, '.', false) {
        return Some(d);
    }
    if let Some(d) = parse_numeric(s, '-', true) {
        return Some(d);
    }
    parse_month_name(s)
}

fn parse_numeric(s: &str, sep: char, padded: bool) -> Option<NaiveDate> {
    let parts: Vec<&str> = s.split(sep).collect();
    let [y, m, d] = parts.as_slice() else {
        return None;
    };
    let digits = |p: &str, min: usize, max: usize| {
        (min..=max).contains(&p.len()) && p.bytes().all(|b| b.is_ascii_digit())
    };
    let (mlen, dlen) = if padded { (2, 2) } else { (1, 1) };
    if !digits(y, 4, 4) || !digits(m, mlen, 2) || !digits(d, dlen, 2) {
        return None;
    }
    NaiveDate::from_ymd_opt(y.parse().ok()?, m.parse().ok()?, d.parse().ok()?)
}

fn parse_month_name(s: &str) -> Option<NaiveDate> {
    let (month_part, rest) = s.split_once(' ')?;
    let month = MONTHS
        .iter()
        .position(|m| m.eq_ignore_ascii_case(month_part))? as u32
        + 1;
    let (day, year) = rest.split_once(',')?;
    let day = day.trim();
    let year = year.trim();
    if day.is_empty()
        || day.len() > 2
        || !day.bytes().all(|b| b.is_ascii_digit())
        || year.len() != 4
        || !year.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    NaiveDate::from_ymd_opt(year.parse().ok()?, month, day.parse().ok()?)
}

const PLATFORM_KEYS: [&str; 5] = [
    "platform",
    "social_platform",
    "social media platform",
    "event_release_platform",
    "social_media_platform",
];

fn field<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter()
        .filter_map(|k| obj.get(*k))
        .find_map(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

/// Normalizes the coordinator's JSON object into a validated spec.
pub fn spec_from_json(value: &Value) -> Result<QuerySpec, CoordinatorError> {
    let obj = value
        .as_object()
        .ok_or_else(|| CoordinatorError::InvalidQuery("reply is not a JSON object".into()))?;
    let keywords = field(obj, &["event_keywords", "keywords", "keyword"])
        .ok_or_else(|| CoordinatorError::InvalidQuery("missing field: event_keywords".into()))?;
    let start_raw = field(obj, &["start_date"])
        .ok_or_else(|| CoordinatorError::InvalidQuery("missing field: start_date".into()))?;
    let start_date = parse_date(start_raw).ok_or_else(|| {
        CoordinatorError::InvalidQuery(format!("unrecognized date format in start_date: {start_raw}"))
    })?;
    let end_date = match field(obj, &["end_date"]) {
        Some(raw) => parse_date(raw).ok_or_else(|| {
            CoordinatorError::InvalidQuery(format!("unrecognized date format in end_date: {raw}"))
        })?,
        None => start_date,
    };
    let platform = field(obj, &PLATFORM_KEYS)
        .ok_or_else(|| CoordinatorError::InvalidQuery("missing field: platform".into()))?;

    validate_spec(QuerySpec {
        event_keywords: keywords.to_string(),
        start_date,
        end_date,
        platform: Platform::normalize(platform),
    })
}

/// Asks the coordinator prompt to structure `raw_query`.
///
/// A reply that is not JSON even after stripping fences gets one repair
/// re-prompt; a second unparseable reply is a [`CoordinatorError::ParseFailure`].
pub fn parse_query(
    raw_query: &str,
    prompt: &LoadedPrompt,
    gateway: &Gateway,
) -> Result<QuerySpec, CoordinatorError> {
    let query = raw_query.trim();
    if query.is_empty() {
        return Err(CoordinatorError::InvalidQuery("empty query".into()));
    }
    let reply = gateway.chat(prompt, query)?;
    let value = match extract_json(&reply) {
        Some(v) => v,
        None => {
            tracing::warn!("coordinator reply was not JSON; re-prompting once");
            let repaired = gateway.chat(prompt, &repair_message(query))?;
            extract_json(&repaired).ok_or(CoordinatorError::ParseFailure {
                raw_response: repaired,
            })?
        }
    };
    let spec = spec_from_json(&value)?;
    tracing::info!(spec = %spec.canonical_json(), "parsed query");
    Ok(spec)
}
