//! Page transports. The crawler core only sees [`PageTransport`]; the live
//! adapter talks HTTP to the platform's search endpoint (or to the fixture
//! server), the directory adapter reads pre-recorded pages from disk.

use std::env;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{NaiveDateTime, Timelike};
use thiserror::Error;

use super::page::render_page;
use super::plan::HourSegment;

pub const ENV_WEIBO_COOKIE: &str = "OPINIONFLOW_WEIBO_COOKIE";
pub const LIVE_BASE_URL: &str = "https://s.weibo.com";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageRequest {
    pub hashtag_query: String,
    pub segment: HourSegment,
    /// 1-based page number.
    pub page: u32,
    pub user_agent: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("transport failure: {0}")]
    Io(String),
}

pub trait PageTransport: Send + Sync {
    /// Returns the raw page body.
    fn fetch_page(&self, request: &PageRequest) -> Result<String, TransportError>;
}

const USER_AGENTS: [&str; 6] = [
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0.0.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 14_4_1) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.4.1 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:125.0) Gecko/20100101 Firefox/125.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:125.0) Gecko/20100101 Firefox/125.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/123.0.0.0 Safari/537.36 Edg/123.0.2420.97",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 17_4 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.4 Mobile/15E148 Safari/604.1",
];

pub fn random_user_agent() -> String {
    use rand::seq::SliceRandom;
    USER_AGENTS
        .choose(&mut rand::thread_rng())
        .expect("non-empty")
        .to_string()
}

/// `YYYY-MM-DD-H`, the hour notation of the search `timescope` parameter.
fn scope_hour(t: NaiveDateTime) -> String {
    format!("{}-{}", t.format("%Y-%m-%d"), t.hour())
}

pub fn timescope(segment: &HourSegment) -> String {
    format!("custom:{}:{}", scope_hour(segment.start), scope_hour(segment.end()))
}

/// Inverse of [`timescope`]; returns the segment a request asks for.
pub fn parse_timescope(value: &str) -> Option<HourSegment> {
    let rest = value.strip_prefix("custom:")?;
    let (start, _) = rest.split_once(':')?;
    let (date, hour) = start.rsplit_once('-')?;
    let start = NaiveDateTime::parse_from_str(
        &format!("{date} {:02}:00", hour.parse::<u32>().ok()?),
        "%Y-%m-%d %H:%M",
    )
    .ok()?;
    Some(HourSegment { start })
}

/// HTTP adapter for the platform's search endpoint.
pub struct HttpTransport {
    base_url: String,
    cookie: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, cookie: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            cookie,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }

    /// Live adapter; the session cookie comes from `OPINIONFLOW_WEIBO_COOKIE`.
    pub fn live(base_url: Option<String>) -> Self {
        Self::new(
            base_url.unwrap_or_else(|| LIVE_BASE_URL.to_string()),
            env::var(ENV_WEIBO_COOKIE).ok(),
        )
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl PageTransport for HttpTransport {
    fn fetch_page(&self, request: &PageRequest) -> Result<String, TransportError> {
        let mut req = self
            .agent
            .get(&format!("{}/weibo", self.base_url))
            .query("q", &request.hashtag_query)
            .query("typeall", "1")
            .query("suball", "1")
            .query("timescope", &timescope(&request.segment))
            .query("Refer", "g")
            .query("page", &request.page.to_string())
            .set("User-Agent", &request.user_agent)
            .set("Accept", "text/html,application/xhtml+xml")
            .set("Accept-Language", "zh-CN,zh;q=0.9,en;q=0.8");
        if let Some(cookie) = &self.cookie {
            req = req.set("Cookie", cookie);
        }
        match req.call() {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| TransportError::Io(e.to_string())),
            Err(ureq::Error::Status(code, _)) => Err(TransportError::Status(code)),
            Err(ureq::Error::Transport(t)) => Err(TransportError::Io(t.to_string())),
        }
    }
}

/// Pre-recorded pages laid out as `<dir>/<segment key>/page-NNN.html`.
///
/// A missing page file is served as an empty result page; a missing
/// directory is a transport failure.
#[derive(Debug, Clone)]
pub struct FixtureDirTransport {
    dir: PathBuf,
}

impl FixtureDirTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn page_path(dir: &Path, segment: &HourSegment, page: u32) -> PathBuf {
        dir.join(segment.key()).join(format!("page-{page:03}.html"))
    }

    pub fn read_page(dir: &Path, segment: &HourSegment, page: u32) -> io::Result<Option<String>> {
        match fs::read_to_string(Self::page_path(dir, segment, page)) {
            Ok(body) => Ok(Some(body)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

impl PageTransport for FixtureDirTransport {
    fn fetch_page(&self, request: &PageRequest) -> Result<String, TransportError> {
        if !self.dir.is_dir() {
            return Err(TransportError::Io(format!(
                "fixture directory {} does not exist",
                self.dir.display()
            )));
        }
        match Self::read_page(&self.dir, &request.segment, request.page) {
            Ok(Some(body)) => Ok(body),
            Ok(None) => Ok(render_page(&[])),
            Err(e) => Err(TransportError::Io(e.to_string())),
        }
    }
}
