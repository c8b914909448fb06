use std::fmt;

use chrono::{Duration, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::coordinator::QuerySpec;

/// Platform search caps pagination at this many pages per query.
pub const PAGE_CAP: u32 = 50;

/// A half-open platform-local hour `[start, start + 1h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HourSegment {
    pub start: NaiveDateTime,
}

impl HourSegment {
    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::hours(1)
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        self.start <= t && t < self.end()
    }

    /// Directory-friendly key, e.g. `2025-04-09T07`.
    pub fn key(&self) -> String {
        self.start.format("%Y-%m-%dT%H").to_string()
    }

    /// Parses [`HourSegment::key`] output.
    pub fn from_key(key: &str) -> Option<Self> {
        let start = NaiveDateTime::parse_from_str(&format!("{key}:00"), "%Y-%m-%dT%H:%M").ok()?;
        Some(Self { start })
    }
}

impl fmt::Display for HourSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {})",
            self.start.format("%Y-%m-%d %H:%M"),
            self.end().format("%Y-%m-%d %H:%M")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionPlan {
    pub hashtag_query: String,
    pub segments: Vec<HourSegment>,
    pub page_cap: u32,
}

pub fn hashtag(keywords: &str) -> String {
    format!("#{}#", keywords.trim())
}

/// Wraps the keyword in hash symbols and tiles the inclusive date window
/// with hourly segments from `start_date 00:00` to `end_date + 1 day 00:00`.
pub fn build_plan(spec: &QuerySpec) -> CollectionPlan {
    let first = spec.start_date.and_time(NaiveTime::MIN);
    let stop = (spec.end_date + Duration::days(1)).and_time(NaiveTime::MIN);
    let mut segments = Vec::new();
    let mut t = first;
    while t < stop {
        segments.push(HourSegment { start: t });
        t += Duration::hours(1);
    }
    CollectionPlan {
        hashtag_query: hashtag(&spec.event_keywords),
        segments,
        page_cap: PAGE_CAP,
    }
}
