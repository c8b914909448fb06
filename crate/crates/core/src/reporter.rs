//! Report agent: join the per-post sentiment and topic artifacts, compute
//! the exact statistics, and ask the summarizer prompts for narrative text.
//!
//! Every number in the report comes from [`compute_statistics`]. LLM output
//! only ever fills narrative sections.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::coordinator::QuerySpec;
use crate::gateway::json::{extract_json, repair_message};
use crate::gateway::{Gateway, LoadedPrompt};
use crate::sentiment::SentimentRecord;
use crate::topic::{tabulate, AggregatedTopic, TopicRecord};

pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

pub const SENTIMENT_OVERVIEW: &str = "Sentiment Overview";
pub const TOPIC_DISTRIBUTION: &str = "Topic Distribution";
pub const SENTIMENT_TOPIC_INSIGHTS: &str = "Sentiment–Topic Insights";
pub const CONCLUSIONS: &str = "Conclusions & Recommendations";
pub const SECTION_TITLES: [&str; 4] = [
    SENTIMENT_OVERVIEW,
    TOPIC_DISTRIBUTION,
    SENTIMENT_TOPIC_INSIGHTS,
    CONCLUSIONS,
];

pub const GENERATION_FAILED: &str = "[generation failed]";
pub const EMPTY_DATASET_NARRATIVE: &str =
    "No posts were collected for this query, so there is nothing to summarize. All counts below are zero.";

/// Number of topics listed in the top-k summary.
pub const TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedRow {
    pub post_text: String,
    pub sentiment: String,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosstabCell {
    pub topic: String,
    pub sentiment: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedPayload {
    pub rows: Vec<MergedRow>,
    /// Per-post label counts.
    pub sentiment_counts: BTreeMap<String, usize>,
    /// Labels the model returned beyond one per post.
    pub sentiment_surplus: BTreeMap<String, usize>,
    pub topic_table: Vec<AggregatedTopic>,
    pub crosstab: BTreeMap<(String, String), usize>,
}

impl MergedPayload {
    pub fn total_posts(&self) -> usize {
        self.rows.len()
    }

    pub fn total_assignments(&self) -> usize {
        self.topic_table.iter().map(|t| t.mention_count).sum()
    }

    pub fn crosstab_cells(&self) -> Vec<CrosstabCell> {
        self.crosstab
            .iter()
            .map(|((topic, sentiment), &count)| CrosstabCell {
                topic: topic.clone(),
                sentiment: sentiment.clone(),
                count,
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ReporterError {
    #[error("merge conflict at row {row}: {reason}")]
    MergeConflict { row: usize, reason: String },
    #[error("topic table does not reconcile with the per-post topics: {0}")]
    Unreconciled(String),
    #[error("cannot write report {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Positional join of the two per-post artifacts.
///
/// Row `i` of both inputs must describe the same post. Each (post, raw
/// topic) assignment is attributed to its canonical topic and the post's
/// sentiment label in the crosstab.
pub fn merge(
    sentiment: &[SentimentRecord],
    topics: &[TopicRecord],
    topic_table: &[AggregatedTopic],
    mapping: &BTreeMap<String, String>,
    sentiment_surplus: &BTreeMap<String, usize>,
) -> Result<MergedPayload, ReporterError> {
    for (row, (s, t)) in sentiment.iter().zip(topics).enumerate() {
        if s.post_text != t.post_text {
            return Err(ReporterError::MergeConflict {
                row,
                reason: "post_text differs between sentiment and topic results".into(),
            });
        }
        if s.batch_number != t.batch_number {
            return Err(ReporterError::MergeConflict {
                row,
                reason: format!("batch_number {} vs {}", s.batch_number, t.batch_number),
            });
        }
    }
    if sentiment.len() != topics.len() {
        return Err(ReporterError::MergeConflict {
            row: sentiment.len().min(topics.len()),
            reason: format!(
                "{} sentiment rows vs {} topic rows",
                sentiment.len(),
                topics.len()
            ),
        });
    }

    let mut rows = Vec::with_capacity(sentiment.len());
    let mut sentiment_counts = BTreeMap::new();
    let mut crosstab = BTreeMap::new();
    for (s, t) in sentiment.iter().zip(topics) {
        let label = s.sentiment.as_str().to_string();
        *sentiment_counts.entry(label.clone()).or_insert(0) += 1;
        let canonical: Vec<String> = t
            .topics
            .iter()
            .map(|raw| mapping.get(raw).cloned().unwrap_or_else(|| raw.clone()))
            .collect();
        for c in &canonical {
            *crosstab.entry((c.clone(), label.clone())).or_insert(0) += 1;
        }
        rows.push(MergedRow {
            post_text: s.post_text.clone(),
            sentiment: label,
            topics: canonical,
        });
    }

    let expected = tabulate(topics, mapping);
    if expected.len() != topic_table.len()
        || expected
            .iter()
            .zip(topic_table)
            .any(|(a, b)| a.canonical_name != b.canonical_name || a.mention_count != b.mention_count)
    {
        return Err(ReporterError::Unreconciled(
            "aggregated topic counts differ from a recount of the topic results".into(),
        ));
    }

    Ok(MergedPayload {
        rows,
        sentiment_counts,
        sentiment_surplus: sentiment_surplus.clone(),
        topic_table: topic_table.to_vec(),
        crosstab,
    })
}

/// `count / total` as a percentage with one decimal, rounded half up.
pub fn percent_one_decimal(count: usize, total: usize) -> String {
    if total == 0 {
        return "0.0".into();
    }
    let tenths = (count as u128 * 2000 + total as u128) / (2 * total as u128);
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// `count / total` as a whole percentage, rounded half up.
pub fn percent_whole(count: usize, total: usize) -> u64 {
    if total == 0 {
        return 0;
    }
    ((count as u128 * 200 + total as u128) / (2 * total as u128)) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentShare {
    pub label: String,
    pub count: usize,
    pub percent: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicShare {
    pub rank: usize,
    pub topic: String,
    pub mention_count: usize,
    pub percent: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSentimentProfile {
    pub topic: String,
    pub mention_count: usize,
    pub shares: Vec<SentimentShare>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statistics {
    pub empty_dataset: bool,
    pub total_posts: usize,
    /// Sum of the sentiment table; exceeds `total_posts` when the model
    /// returned surplus labels.
    pub total_labels: usize,
    pub surplus_labels: BTreeMap<String, usize>,
    /// Sorted by count descending, then label.
    pub sentiment: Vec<SentimentShare>,
    pub total_assignments: usize,
    pub topics: Vec<TopicShare>,
    pub top_topics: Vec<String>,
    pub topic_sentiment: Vec<TopicSentimentProfile>,
}

fn ranked_shares(counts: &BTreeMap<String, usize>, total: usize) -> Vec<SentimentShare> {
    let mut shares: Vec<SentimentShare> = counts
        .iter()
        .map(|(label, &count)| SentimentShare {
            label: label.clone(),
            count,
            percent: percent_one_decimal(count, total),
        })
        .collect();
    shares.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    shares
}

/// Sentiment shares are over the post count and include surplus labels in
/// the tally; topic shares are over total assignments.
pub fn compute_statistics(payload: &MergedPayload) -> Statistics {
    let total_posts = payload.total_posts();
    let mut tally = payload.sentiment_counts.clone();
    for (label, n) in &payload.sentiment_surplus {
        *tally.entry(label.clone()).or_insert(0) += n;
    }
    let total_labels = tally.values().sum();
    let total_assignments = payload.total_assignments();
    let topics: Vec<TopicShare> = payload
        .topic_table
        .iter()
        .enumerate()
        .map(|(i, t)| TopicShare {
            rank: i + 1,
            topic: t.canonical_name.clone(),
            mention_count: t.mention_count,
            percent: percent_whole(t.mention_count, total_assignments),
        })
        .collect();
    let topic_sentiment = payload
        .topic_table
        .iter()
        .map(|t| {
            let counts: BTreeMap<String, usize> = payload
                .crosstab
                .range((t.canonical_name.clone(), String::new())..)
                .take_while(|((topic, _), _)| *topic == t.canonical_name)
                .map(|((_, s), &n)| (s.clone(), n))
                .collect();
            TopicSentimentProfile {
                topic: t.canonical_name.clone(),
                mention_count: t.mention_count,
                shares: ranked_shares(&counts, t.mention_count),
            }
        })
        .collect();
    Statistics {
        empty_dataset: total_posts == 0,
        total_posts,
        total_labels,
        surplus_labels: payload.sentiment_surplus.clone(),
        sentiment: ranked_shares(&tally, total_posts),
        total_assignments,
        top_topics: topics.iter().take(TOP_K).map(|t| t.topic.clone()).collect(),
        topics,
        topic_sentiment,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub title: String,
    pub body: String,
    pub generated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpinionReport {
    pub query: Option<QuerySpec>,
    pub sections: Vec<ReportSection>,
    pub statistics: Statistics,
    pub warnings: Vec<String>,
}

impl OpinionReport {
    pub fn section(&self, title: &str) -> Option<&ReportSection> {
        self.sections.iter().find(|s| s.title == title)
    }

    pub fn fully_generated(&self) -> bool {
        self.sections.iter().all(|s| s.generated)
    }
}

pub struct ReportPrompts<'a> {
    pub sentiment_summarizer: &'a LoadedPrompt,
    pub topic_summarizer: &'a LoadedPrompt,
    /// Produces the last two sections; without it they are marked failed.
    pub synthesizer: Option<&'a LoadedPrompt>,
}

pub fn sentiment_summary_request(stats: &Statistics, query: Option<&QuerySpec>) -> String {
    serde_json::to_string_pretty(&json!({
        "query": query,
        "total_posts": stats.total_posts,
        "sentiment": stats.sentiment,
        "surplus_labels": stats.surplus_labels,
    }))
    .expect("serializes")
}

pub fn topic_summary_request(stats: &Statistics, query: Option<&QuerySpec>) -> String {
    serde_json::to_string_pretty(&json!({
        "query": query,
        "total_assignments": stats.total_assignments,
        "topics": stats.topics,
    }))
    .expect("serializes")
}

pub fn synthesis_request(
    stats: &Statistics,
    query: Option<&QuerySpec>,
    sentiment_overview: &str,
    topic_distribution: &str,
) -> String {
    serde_json::to_string_pretty(&json!({
        "query": query,
        "sentiment_overview": sentiment_overview,
        "topic_distribution": topic_distribution,
        "topic_sentiment": stats.topic_sentiment,
    }))
    .expect("serializes")
}

fn narrative(gateway: &Gateway, prompt: &LoadedPrompt, user: &str) -> Result<String, String> {
    match gateway.chat(prompt, user) {
        Ok(text) if !text.trim().is_empty() => Ok(text.trim().to_string()),
        Ok(_) => Err(format!("{} returned an empty narrative", prompt.agent_name)),
        Err(e) => Err(format!("{}: {e}", prompt.agent_name)),
    }
}

fn parse_synthesis(reply: &str) -> Option<(String, String)> {
    let v = extract_json(reply)?;
    let get = |k: &str| {
        v.get(k)
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };
    Some((
        get("sentiment_topic_insights")?,
        get("conclusions_and_recommendations")?,
    ))
}

fn synthesize(gateway: &Gateway, prompt: &LoadedPrompt, user: &str) -> Result<(String, String), String> {
    let reply = gateway
        .chat(prompt, user)
        .map_err(|e| format!("{}: {e}", prompt.agent_name))?;
    if let Some(parsed) = parse_synthesis(&reply) {
        return Ok(parsed);
    }
    tracing::warn!("synthesis reply unparseable; re-prompting once");
    let reply = gateway
        .chat(prompt, &repair_message(user))
        .map_err(|e| format!("{}: {e}", prompt.agent_name))?;
    parse_synthesis(&reply).ok_or_else(|| format!("{}: reply could not be parsed", prompt.agent_name))
}

fn section(title: &str, result: Result<String, String>, warnings: &mut Vec<String>) -> ReportSection {
    match result {
        Ok(body) => ReportSection {
            title: title.into(),
            body,
            generated: true,
        },
        Err(w) => {
            tracing::warn!(section = title, "{w}");
            warnings.push(format!("{title}: {w}"));
            ReportSection {
                title: title.into(),
                body: GENERATION_FAILED.into(),
                generated: false,
            }
        }
    }
}

/// Builds the four-section report.
///
/// The two summarizers run concurrently; the synthesizer runs after both
/// and only if both succeeded. A failed call leaves its sections marked
/// [`GENERATION_FAILED`] while the statistics are still reported. An empty
/// dataset makes no LLM calls.
pub fn generate_report(
    payload: &MergedPayload,
    prompts: &ReportPrompts<'_>,
    gateway: &Gateway,
    query: Option<&QuerySpec>,
) -> OpinionReport {
    let statistics = compute_statistics(payload);
    let mut warnings = Vec::new();
    if statistics.empty_dataset {
        let sections = SECTION_TITLES
            .iter()
            .map(|t| ReportSection {
                title: t.to_string(),
                body: EMPTY_DATASET_NARRATIVE.into(),
                generated: true,
            })
            .collect();
        return OpinionReport {
            query: query.cloned(),
            sections,
            statistics,
            warnings,
        };
    }

    let (overview, distribution) = thread::scope(|s| {
        let a = s.spawn(|| {
            narrative(
                gateway,
                prompts.sentiment_summarizer,
                &sentiment_summary_request(&statistics, query),
            )
        });
        let b = s.spawn(|| {
            narrative(
                gateway,
                prompts.topic_summarizer,
                &topic_summary_request(&statistics, query),
            )
        });
        (
            a.join().expect("summarizer thread"),
            b.join().expect("summarizer thread"),
        )
    });

    let synthesis = match (&overview, &distribution, prompts.synthesizer) {
        (Ok(o), Ok(d), Some(prompt)) => {
            synthesize(gateway, prompt, &synthesis_request(&statistics, query, o, d))
        }
        (_, _, None) => Err("no synthesis prompt configured".to_string()),
        _ => Err("skipped because a summarizer failed".to_string()),
    };
    let (insights, conclusions) = match synthesis {
        Ok((i, c)) => (Ok(i), Ok(c)),
        Err(e) => (Err(e.clone()), Err(e)),
    };

    let sections = vec![
        section(SENTIMENT_OVERVIEW, overview, &mut warnings),
        section(TOPIC_DISTRIBUTION, distribution, &mut warnings),
        section(SENTIMENT_TOPIC_INSIGHTS, insights, &mut warnings),
        section(CONCLUSIONS, conclusions, &mut warnings),
    ];
    OpinionReport {
        query: query.cloned(),
        sections,
        statistics,
        warnings,
    }
}

fn sentiment_table(out: &mut String, shares: &[SentimentShare], indent: &str) {
    for s in shares {
        let _ = writeln!(out, "{indent}{:<12} {:>7} {:>6}%", s.label, s.count, s.percent);
    }
}

fn topic_table(out: &mut String, topics: &[TopicShare]) {
    for t in topics {
        let _ = writeln!(
            out,
            "  {:>3}. {} | {} | {}%",
            t.rank, t.topic, t.mention_count, t.percent
        );
    }
}

fn profile_table(out: &mut String, profiles: &[TopicSentimentProfile]) {
    for p in profiles {
        let _ = writeln!(out, "  {} ({} mentions)", p.topic, p.mention_count);
        sentiment_table(out, &p.shares, "      ");
    }
}

/// Renders just the statistics appendix.
pub fn render_statistics(stats: &Statistics) -> String {
    let mut out = String::new();
    if stats.empty_dataset {
        out.push_str("empty dataset\n");
    }
    let _ = writeln!(out, "Posts analyzed: {}", stats.total_posts);
    let _ = writeln!(out, "Sentiment labels: {}", stats.total_labels);
    if !stats.surplus_labels.is_empty() {
        let extra: Vec<String> = stats
            .surplus_labels
            .iter()
            .map(|(l, n)| format!("{l} {n}"))
            .collect();
        let _ = writeln!(
            out,
            "Surplus labels returned beyond one per post: {}",
            extra.join(", ")
        );
    }
    out.push_str("\nSentiment distribution (share of posts)\n");
    sentiment_table(&mut out, &stats.sentiment, "  ");
    let _ = writeln!(
        out,
        "\nCanonical topics ({} topics, {} assignments; share of assignments)",
        stats.topics.len(),
        stats.total_assignments
    );
    topic_table(&mut out, &stats.topics);
    out.push_str("\nSentiment by topic (share of topic mentions)\n");
    profile_table(&mut out, &stats.topic_sentiment);
    out
}

/// Plain-text report: the four sections, each followed by the numbers it
/// draws on, then the full statistics appendix.
pub fn render_text(report: &OpinionReport) -> String {
    let stats = &report.statistics;
    let mut out = String::from("PUBLIC OPINION REPORT\n");
    if let Some(q) = &report.query {
        let _ = writeln!(out, "Event: {}", q.event_keywords);
        let _ = writeln!(out, "Platform: {}", q.platform.id());
        let _ = writeln!(out, "Window: {} to {}", q.start_date, q.end_date);
    }
    for section in &report.sections {
        let _ = write!(out, "\n== {} ==\n{}\n", section.title, section.body);
        match section.title.as_str() {
            SENTIMENT_OVERVIEW => {
                out.push('\n');
                sentiment_table(&mut out, &stats.sentiment, "  ");
            }
            TOPIC_DISTRIBUTION => {
                let top: Vec<TopicShare> = stats.topics.iter().take(TOP_K).cloned().collect();
                let _ = writeln!(out, "\nTop {} topics:", top.len());
                topic_table(&mut out, &top);
            }
            SENTIMENT_TOPIC_INSIGHTS => {
                out.push('\n');
                let top: Vec<TopicSentimentProfile> =
                    stats.topic_sentiment.iter().take(TOP_K).cloned().collect();
                profile_table(&mut out, &top);
            }
            _ => {}
        }
    }
    out.push_str("\n== Statistics Appendix ==\n");
    out.push_str(&render_statistics(stats));
    out
}

/// Writes `report.txt` and its JSON twin into `dir`.
pub fn write_report(dir: &Path, report: &OpinionReport) -> Result<(), ReporterError> {
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| ReporterError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write(REPORT_TXT, render_text(report))?;
    write(
        REPORT_JSON,
        serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    )
}
