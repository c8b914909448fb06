//! The hashtag crawler: plan hourly segments, paginate each segment up to
//! the platform cap, keep posts that fall in the segment and carry the exact
//! hashtag, and write `Collected_data.csv`.

pub mod fixture_server;
pub mod page;
mod plan;
pub mod transport;

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use chrono::NaiveDateTime;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::QuerySpec;
pub use page::{parse_page, parse_platform_timestamp, render_page, CandidatePost, PageParseError};
pub use plan::{build_plan, hashtag, CollectionPlan, HourSegment, PAGE_CAP};
pub use transport::{
    random_user_agent, FixtureDirTransport, HttpTransport, PageRequest, PageTransport,
    TransportError,
};

pub const COLLECTED_CSV: &str = "Collected_data.csv";
pub const COLLECTED_HEADER: [&str; 7] = [
    "user_id",
    "timestamp",
    "source_device",
    "reposts",
    "comments",
    "likes",
    "text",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PostRecord {
    pub user_id: String,
    #[serde(with = "minute_format")]
    pub timestamp: NaiveDateTime,
    pub source_device: String,
    pub reposts: u64,
    pub comments: u64,
    pub likes: u64,
    pub text: String,
}

impl PostRecord {
    fn dedup_key(&self) -> (String, NaiveDateTime, String) {
        (self.user_id.clone(), self.timestamp, self.text.clone())
    }
}

mod minute_format {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub const FORMAT: &str = "%Y-%m-%d %H:%M";

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format(FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        NaiveDateTime::parse_from_str(&raw, FORMAT).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterDecision {
    Keep(PostRecord),
    OutOfWindow,
    MissingHashtag,
    BadTimestamp,
    EmptyText,
}

/// Keeps a candidate iff its timestamp lies in `segment` and its text
/// contains `hashtag_query` verbatim.
pub fn filter_post(candidate: &CandidatePost, segment: &HourSegment, hashtag_query: &str) -> FilterDecision {
    let Some(timestamp) = parse_platform_timestamp(&candidate.raw_timestamp, segment.start.date())
    else {
        return FilterDecision::BadTimestamp;
    };
    if candidate.text.trim().is_empty() {
        return FilterDecision::EmptyText;
    }
    if !segment.contains(timestamp) {
        return FilterDecision::OutOfWindow;
    }
    if !candidate.text.contains(hashtag_query) {
        return FilterDecision::MissingHashtag;
    }
    FilterDecision::Keep(PostRecord {
        user_id: candidate.user_id.clone(),
        timestamp,
        source_device: candidate.source_device.clone(),
        reposts: candidate.reposts,
        comments: candidate.comments,
        likes: candidate.likes,
        text: candidate.text.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrawlerConfig {
    pub retry_delay_min: Duration,
    pub retry_delay_max: Duration,
    /// Segments fetched concurrently. Pages within a segment are sequential.
    pub workers: usize,
}

impl CrawlerConfig {
    pub fn live() -> Self {
        Self {
            retry_delay_min: Duration::from_secs(1),
            retry_delay_max: Duration::from_secs(3),
            workers: 2,
        }
    }

    pub fn fixture() -> Self {
        Self {
            retry_delay_min: Duration::ZERO,
            retry_delay_max: Duration::ZERO,
            workers: 4,
        }
    }

    fn retry_delay(&self) -> Duration {
        if self.retry_delay_max <= self.retry_delay_min {
            return self.retry_delay_min;
        }
        rand::thread_rng().gen_range(self.retry_delay_min..=self.retry_delay_max)
    }
}

/// Counters describing what happened during a crawl.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectDiagnostics {
    pub requests: usize,
    pub pages_fetched: usize,
    pub pages_skipped: usize,
    pub retries: usize,
    pub out_of_window: usize,
    pub missing_hashtag: usize,
    pub bad_timestamp: usize,
    pub empty_text: usize,
    pub duplicates: usize,
}

impl CollectDiagnostics {
    fn absorb(&mut self, other: &CollectDiagnostics) {
        self.requests += other.requests;
        self.pages_fetched += other.pages_fetched;
        self.pages_skipped += other.pages_skipped;
        self.retries += other.retries;
        self.out_of_window += other.out_of_window;
        self.missing_hashtag += other.missing_hashtag;
        self.bad_timestamp += other.bad_timestamp;
        self.empty_text += other.empty_text;
        self.duplicates += other.duplicates;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentResult {
    pub segment: HourSegment,
    pub posts: Vec<PostRecord>,
    pub diagnostics: CollectDiagnostics,
}

#[derive(Debug, Error)]
enum PageError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Parse(#[from] PageParseError),
}

fn fetch_and_parse(
    transport: &dyn PageTransport,
    request: &PageRequest,
) -> Result<Vec<CandidatePost>, PageError> {
    let body = transport.fetch_page(request)?;
    Ok(parse_page(&body)?)
}

/// Consecutive skipped pages after which a segment is abandoned.
pub const MAX_CONSECUTIVE_SKIPS: usize = 3;

/// Paginates one hourly segment.
///
/// Pages are requested in order up to the plan's cap, stopping at the first
/// empty page. A failed page is retried once after a random delay and
/// skipped if it fails again; after [`MAX_CONSECUTIVE_SKIPS`] skips in a row
/// the endpoint is treated as down for this segment.
pub fn fetch_segment(
    plan: &CollectionPlan,
    segment: &HourSegment,
    transport: &dyn PageTransport,
    config: &CrawlerConfig,
) -> SegmentResult {
    let mut diag = CollectDiagnostics::default();
    let mut posts = Vec::new();
    let mut consecutive_skips = 0;

    for page in 1..=plan.page_cap {
        let mut attempt = 0;
        let candidates = loop {
            attempt += 1;
            let request = PageRequest {
                hashtag_query: plan.hashtag_query.clone(),
                segment: *segment,
                page,
                user_agent: random_user_agent(),
            };
            diag.requests += 1;
            match fetch_and_parse(transport, &request) {
                Ok(c) => break Some(c),
                Err(err) if attempt == 1 => {
                    tracing::warn!(%segment, page, %err, "page fetch failed; retrying once");
                    diag.retries += 1;
                    let delay = config.retry_delay();
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                }
                Err(err) => {
                    tracing::warn!(%segment, page, %err, "page fetch failed twice; skipping page");
                    diag.pages_skipped += 1;
                    break None;
                }
            }
        };
        let Some(candidates) = candidates else {
            consecutive_skips += 1;
            if consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
                tracing::warn!(%segment, page, "too many failed pages in a row; abandoning segment");
                break;
            }
            continue;
        };
        consecutive_skips = 0;
        diag.pages_fetched += 1;
        if candidates.is_empty() {
            break;
        }
        for candidate in &candidates {
            match filter_post(candidate, segment, &plan.hashtag_query) {
                FilterDecision::Keep(post) => posts.push(post),
                FilterDecision::OutOfWindow => diag.out_of_window += 1,
                FilterDecision::MissingHashtag => diag.missing_hashtag += 1,
                FilterDecision::BadTimestamp => diag.bad_timestamp += 1,
                FilterDecision::EmptyText => diag.empty_text += 1,
            }
        }
    }

    SegmentResult {
        segment: *segment,
        posts,
        diagnostics: diag,
    }
}

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("every page request failed ({requests} requests); the transport appears to be down")]
    TransportUnavailable { requests: usize },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone)]
pub struct CollectOutcome {
    pub plan: CollectionPlan,
    pub posts: Vec<PostRecord>,
    pub diagnostics: CollectDiagnostics,
}

/// Crawls every segment of the plan and assembles results in segment order,
/// deduplicating on `(user_id, timestamp, text)`.
pub fn crawl(
    spec: &QuerySpec,
    transport: &dyn PageTransport,
    config: &CrawlerConfig,
) -> Result<CollectOutcome, CollectError> {
    let plan = build_plan(spec);
    let results: Vec<Mutex<Option<SegmentResult>>> =
        plan.segments.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.workers.clamp(1, plan.segments.len().max(1));

    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(segment) = plan.segments.get(i) else {
                    break;
                };
                let result = fetch_segment(&plan, segment, transport, config);
                *results[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut diagnostics = CollectDiagnostics::default();
    let mut seen = HashSet::new();
    let mut posts = Vec::new();
    for slot in results {
        let result = slot.into_inner().unwrap().expect("every segment is fetched");
        diagnostics.absorb(&result.diagnostics);
        for post in result.posts {
            if seen.insert(post.dedup_key()) {
                posts.push(post);
            } else {
                diagnostics.duplicates += 1;
            }
        }
    }

    if diagnostics.pages_fetched == 0 && diagnostics.requests > 0 {
        return Err(CollectError::TransportUnavailable {
            requests: diagnostics.requests,
        });
    }
    if posts.is_empty() {
        tracing::warn!(query = %plan.hashtag_query, "no posts collected; downstream stages will see an empty dataset");
    }
    tracing::info!(rows = posts.len(), ?diagnostics, "collection finished");
    Ok(CollectOutcome {
        plan,
        posts,
        diagnostics,
    })
}

/// [`crawl`], then write the result to `out_path`.
pub fn collect(
    spec: &QuerySpec,
    transport: &dyn PageTransport,
    config: &CrawlerConfig,
    out_path: &Path,
) -> Result<CollectOutcome, CollectError> {
    let outcome = crawl(spec, transport, config)?;
    write_posts_csv(out_path, &outcome.posts).map_err(|source| CollectError::Write {
        path: out_path.display().to_string(),
        source,
    })?;
    Ok(outcome)
}

pub fn write_posts_csv(path: &Path, posts: &[PostRecord]) -> Result<(), csv::Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(COLLECTED_HEADER)?;
    for post in posts {
        w.serialize(post)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_posts_csv(path: &Path) -> Result<Vec<PostRecord>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(COLLECTED_HEADER) {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header in {}: {:?}", path.display(), header),
        )));
    }
    r.deserialize().collect()
}
