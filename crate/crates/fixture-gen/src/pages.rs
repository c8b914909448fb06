//! Search-result pages for the corpus, with the noise a real crawl sees:
//! stale and leaked timestamps, near-miss hashtags, relative times and
//! cards repeated across page boundaries.

use std::fs;
use std::io;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use opinionflow::collector::{render_page, CandidatePost, HourSegment};
use opinionflow::collector::transport::FixtureDirTransport;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{GenPost, HASHTAG};

pub const CARDS_PER_PAGE: usize = 10;

pub fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 4, 9).expect("valid date")
}

fn stamp(rng: &mut ChaCha8Rng, date: NaiveDate, hour: u32, minute: u32) -> String {
    match rng.gen_range(0..10) {
        0 => format!("{} {hour:02}:{minute:02}", date.format("%Y-%m-%d")),
        1 => format!("{} {hour:02}:{minute:02}", date.format("%Y年%m月%d日")),
        _ => format!("{} {hour:02}:{minute:02}", date.format("%m月%d日")),
    }
}

fn candidate(rng: &mut ChaCha8Rng, post: &GenPost) -> CandidatePost {
    CandidatePost {
        user_id: post.user_id.clone(),
        raw_timestamp: stamp(rng, day(), post.hour, post.minute),
        source_device: post.source_device.clone(),
        reposts: post.reposts,
        comments: post.comments,
        likes: post.likes,
        text: post.text.clone(),
    }
}

fn noise(rng: &mut ChaCha8Rng, user: &str, raw_timestamp: String, text: String) -> CandidatePost {
    CandidatePost {
        user_id: user.to_string(),
        raw_timestamp,
        source_device: "iPhone 13".into(),
        reposts: rng.gen_range(0..5),
        comments: rng.gen_range(0..5),
        likes: rng.gen_range(0..50),
        text,
    }
}

/// Cards that look relevant but must be filtered out of hour `hour`.
fn distractor(rng: &mut ChaCha8Rng, hour: u32, serial: usize) -> CandidatePost {
    let minute = rng.gen_range(0..60);
    match rng.gen_range(0..4) {
        0 => {
            let (date, h) = if hour == 23 {
                (day() + Duration::days(1), 0)
            } else {
                (day(), hour + 1)
            };
            let ts = stamp(rng, date, h, minute);
            noise(rng, "Breaking Wire", ts, format!("{HASHTAG} Late update no. {serial}: markets react again."))
        }
        1 => {
            let ts = stamp(rng, day(), hour, minute);
            noise(rng, "Trade Chatter", ts, format!("#U.S. tariffs# Thread {serial} on what comes next."))
        }
        2 => {
            let ts = stamp(rng, day(), hour, minute);
            noise(rng, "Casual Reader", ts, format!("U.S. tariff news again, post {serial}, no tag this time."))
        }
        _ => {
            let ts = ["5分钟前", "刚刚", "今天 14:03", "1小时前"][rng.gen_range(0..4)].to_string();
            noise(rng, "Live Feed", ts, format!("{HASHTAG} Live coverage item {serial}."))
        }
    }
}

/// Renders every hour's pages into `dir/<segment>/page-NNN.html`.
/// Returns the number of pages written.
pub fn write_pages(rng: &mut ChaCha8Rng, posts: &[GenPost], dir: &Path) -> io::Result<usize> {
    let mut written = 0;
    let mut serial = 0;
    for hour in 0..24u32 {
        let hour_posts: Vec<&GenPost> = posts.iter().filter(|p| p.hour == hour).collect();
        if hour_posts.is_empty() {
            continue;
        }
        let segment = HourSegment {
            start: day().and_hms_opt(hour, 0, 0).expect("valid hour"),
        };
        let mut previous_last: Option<CandidatePost> = None;
        for (i, chunk) in hour_posts.chunks(CARDS_PER_PAGE).enumerate() {
            let mut cards: Vec<CandidatePost> = chunk.iter().map(|p| candidate(rng, p)).collect();
            if hour == 0 && i == 0 {
                for m in [58, 55] {
                    let ts = stamp(rng, day() - Duration::days(1), 23, m);
                    cards.push(noise(rng, "Night Owl News", ts, format!("{HASHTAG} Overnight roundup at 23:{m}.")));
                }
            }
            if rng.gen_bool(0.35) {
                serial += 1;
                let at = rng.gen_range(0..=cards.len());
                cards.insert(at, distractor(rng, hour, serial));
            }
            if let Some(dup) = previous_last.take() {
                if rng.gen_bool(0.3) {
                    cards.insert(0, dup);
                }
            }
            previous_last = cards
                .iter()
                .rev()
                .find(|c| chunk.iter().any(|p| p.text == c.text && p.user_id == c.user_id))
                .cloned();
            let path = FixtureDirTransport::page_path(dir, &segment, i as u32 + 1);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, render_page(&cards))?;
            written += 1;
        }
    }
    Ok(written)
}
