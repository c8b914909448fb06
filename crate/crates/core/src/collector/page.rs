//! Weibo search-result page markup: parsing and (for fixtures) rendering.
//!
//! A result page carries a `#pl_feedlist_index` container holding zero or
//! more `card-wrap` feed items. A page without the container (a login wall,
//! a truncated body, an error page) is a parse error, not an empty page.

use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime};
use regex::Regex;
use scraper::{ElementRef, Html, Selector};
use thiserror::Error;

/// One feed item as it appears on a page, before filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePost {
    pub user_id: String,
    pub raw_timestamp: String,
    pub source_device: String,
    pub reposts: u64,
    pub comments: u64,
    pub likes: u64,
    pub text: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PageParseError {
    #[error("page has no result container")]
    MissingContainer,
}

struct Selectors {
    container: Selector,
    card: Selector,
    name: Selector,
    full_text: Selector,
    text: Selector,
    from_links: Selector,
    forward: Selector,
    comment: Selector,
    like: Selector,
}

fn selectors() -> &'static Selectors {
    static S: OnceLock<Selectors> = OnceLock::new();
    S.get_or_init(|| {
        let sel = |s: &str| Selector::parse(s).expect("static selector");
        Selectors {
            container: sel("#pl_feedlist_index"),
            card: sel(r#"div.card-wrap[action-type="feed_list_item"]"#),
            name: sel("a.name"),
            full_text: sel(r#"p.txt[node-type="feed_list_content_full"]"#),
            text: sel(r#"p.txt[node-type="feed_list_content"]"#),
            from_links: sel("div.from a"),
            forward: sel(r#"a[action-type="feed_list_forward"]"#),
            comment: sel(r#"a[action-type="feed_list_comment"]"#),
            like: sel(r#"a[action-type="feed_list_like"]"#),
        }
    })
}

fn collapsed_text(el: ElementRef<'_>) -> String {
    el.text()
        .flat_map(str::split_whitespace)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses an engagement cell: "转发 12", "1.2万", "评论" (no number means 0).
pub fn parse_count(raw: &str) -> u64 {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(\d+(?:\.\d+)?)\s*(万)?").unwrap());
    let Some(caps) = re.captures(raw) else {
        return 0;
    };
    let value: f64 = caps[1].parse().unwrap_or(0.0);
    if caps.get(2).is_some() {
        (value * 10_000.0).round() as u64
    } else {
        value as u64
    }
}

pub fn parse_page(html: &str) -> Result<Vec<CandidatePost>, PageParseError> {
    let doc = Html::parse_document(html);
    let s = selectors();
    let container = doc
        .select(&s.container)
        .next()
        .ok_or(PageParseError::MissingContainer)?;

    let mut out = Vec::new();
    for card in container.select(&s.card) {
        let user_id = card
            .select(&s.name)
            .next()
            .map(collapsed_text)
            .unwrap_or_default();
        let text = card
            .select(&s.full_text)
            .next()
            .or_else(|| card.select(&s.text).next())
            .map(collapsed_text)
            .unwrap_or_default();
        let mut from = card.select(&s.from_links);
        let raw_timestamp = from.next().map(collapsed_text).unwrap_or_default();
        let source_device = from.next().map(collapsed_text).unwrap_or_default();
        let count = |sel: &Selector| {
            card.select(sel)
                .next()
                .map(|a| parse_count(&collapsed_text(a)))
                .unwrap_or(0)
        };
        out.push(CandidatePost {
            user_id,
            raw_timestamp,
            source_device,
            reposts: count(&s.forward),
            comments: count(&s.comment),
            likes: count(&s.like),
            text,
        });
    }
    Ok(out)
}

/// Resolves a page timestamp to a platform-local instant.
///
/// Accepts `YYYY-MM-DD HH:MM`, `YYYY年MM月DD日 HH:MM` and `MM月DD日 HH:MM`
/// (year taken from `reference`). Relative forms such as "5分钟前" depend on
/// the fetch time rather than the post and are rejected.
pub fn parse_platform_timestamp(raw: &str, reference: NaiveDate) -> Option<NaiveDateTime> {
    static FULL: OnceLock<Regex> = OnceLock::new();
    static CN: OnceLock<Regex> = OnceLock::new();
    let full = FULL.get_or_init(|| {
        Regex::new(r"^(\d{4})-(\d{2})-(\d{2})\s+(\d{1,2}):(\d{2})$").unwrap()
    });
    let cn = CN.get_or_init(|| {
        Regex::new(r"^(?:(\d{4})年)?(\d{1,2})月(\d{1,2})日\s*(\d{1,2}):(\d{2})$").unwrap()
    });
    let s = raw.trim();
    let caps = full.captures(s).or_else(|| cn.captures(s))?;
    let year = caps
        .get(1)
        .map(|m| m.as_str().parse().ok())
        .unwrap_or(Some(reference.year()))?;
    let date = NaiveDate::from_ymd_opt(year, caps[2].parse().ok()?, caps[3].parse().ok()?)?;
    let time = NaiveTime::from_hms_opt(caps[4].parse().ok()?, caps[5].parse().ok()?, 0)?;
    Some(date.and_time(time))
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn count_cell(label: &str, n: u64) -> String {
    if n == 0 {
        label.to_string()
    } else {
        format!("{label} {n}")
    }
}

/// Renders candidates as a search-result page that [`parse_page`] reads back.
pub fn render_page(posts: &[CandidatePost]) -> String {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>微博搜索</title></head><body>\n<div id=\"pl_feedlist_index\">\n",
    );
    if posts.is_empty() {
        html.push_str("<div class=\"card card-no-result\"><p>抱歉，未找到相关结果。</p></div>\n");
    }
    for p in posts {
        html.push_str(&format!(
            concat!(
                "<div class=\"card-wrap\" action-type=\"feed_list_item\">\n",
                "  <div class=\"card\"><div class=\"card-feed\"><div class=\"content\">\n",
                "    <div class=\"info\"><div><a class=\"name\" href=\"#\">{user}</a></div></div>\n",
                "    <p class=\"txt\" node-type=\"feed_list_content\">{text}</p>\n",
                "    <div class=\"from\"><a href=\"#\">{ts}</a> 来自 <a rel=\"nofollow\">{device}</a></div>\n",
                "  </div></div>\n",
                "  <div class=\"card-act\"><ul>\n",
                "    <li><a action-type=\"feed_list_forward\">{fwd}</a></li>\n",
                "    <li><a action-type=\"feed_list_comment\">{cmt}</a></li>\n",
                "    <li><a action-type=\"feed_list_like\"><em>{like}</em></a></li>\n",
                "  </ul></div></div>\n",
                "</div>\n",
            ),
            user = escape_html(&p.user_id),
            text = escape_html(&p.text),
            ts = escape_html(&p.raw_timestamp),
            device = escape_html(&p.source_device),
            fwd = count_cell("转发", p.reposts),
            cmt = count_cell("评论", p.comments),
            like = if p.likes == 0 { String::new() } else { p.likes.to_string() },
        ));
    }
    html.push_str("</div>\n</body></html>\n");
    html
}
