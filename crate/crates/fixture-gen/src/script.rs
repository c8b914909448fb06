//! Scripted model replies for the golden run.

use std::collections::BTreeMap;
use std::io;
use std::num::NonZeroUsize;

use opinionflow::batching::{batch_number, batch_user_text, make_batches};
use opinionflow::coordinator::{spec_from_json, QuerySpec};
use opinionflow::gateway::MockScriptWriter;
use opinionflow::reporter::{
    compute_statistics, merge, sentiment_summary_request, synthesis_request, topic_summary_request,
    Statistics,
};
use opinionflow::sentiment::{SentimentLabel, SentimentRecord, SENTIMENT_TASK};
use opinionflow::topic::{consolidation_user_text, tabulate, TopicRecord, TOPIC_TASK};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::corpus::{Corpus, GenPost, CANONICAL};

pub const QUERY_LONG: &str =
    "Please analyze public opinion on Sina Weibo about the U.S. tariff on April 9, 2025";
pub const QUERY_SHORT: &str = "U.S. tariff, 2025.4.9, Weibo";

/// Full batches whose reply carries one label too many.
pub const SURPLUS_BATCHES: [usize; 2] = [57, 133];

const LONG_REPLY: &str = "```json\n{\n  \"event_keywords\": \"U.S. tariff\",\n  \"start_date\": \"2025-04-09\",\n  \"end_date\": \"2025-04-09\",\n  \"event_release_platform\": \"Sina Weibo\"\n}\n```";
const SHORT_REPLY: &str = "{\"event_keywords\": \"U.S. tariff\", \"start_date\": \"2025.4.9\", \"end_date\": \"2025.4.9\", \"platform\": \"Weibo\"}";

/// Served for any request the script does not cover.
pub const NO_EVENT_REPLY: &str =
    "I could not identify an event, a date range and a platform in this request.";

pub fn query_spec() -> QuerySpec {
    let v: Value = serde_json::from_str(SHORT_REPLY).expect("static reply");
    spec_from_json(&v).expect("static reply is valid")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializes")
}

fn sentiment_reply(rng: &mut ChaCha8Rng, batch: usize, labels: &[String]) -> String {
    let ided = |labels: &[String], cap: bool, key: &str| -> Vec<Value> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| json!({"id": i + 1, key: if cap { capitalize(l) } else { l.clone() }}))
            .collect()
    };
    match batch % 6 {
        0 => serde_json::to_string(labels).expect("serializes"),
        1 => pretty(&Value::Array(ided(labels, false, "sentiment"))),
        2 => pretty(&json!({ "results": ided(labels, true, "label") })),
        3 => format!("```json\n{}\n```", pretty(&Value::Array(ided(labels, false, "sentiment")))),
        4 => format!(
            "Here are the labels:\n```\n{}\n```",
            serde_json::to_string(labels).expect("serializes")
        ),
        _ => {
            let mut items = ided(labels, false, "sentiment");
            items.shuffle(rng);
            pretty(&json!({ "labels": items }))
        }
    }
}

fn topic_reply(batch: usize, lists: &[Vec<String>]) -> String {
    let ided: Vec<Value> = lists
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"id": i + 1, "topics": t}))
        .collect();
    match batch % 4 {
        0 => pretty(&Value::Array(ided)),
        1 => pretty(&json!({ "results": ided })),
        2 => serde_json::to_string(lists).expect("serializes"),
        _ => {
            let joined: Vec<Value> = lists
                .iter()
                .enumerate()
                .map(|(i, t)| json!({"id": i + 1, "topics": t.join("; ")}))
                .collect();
            format!("```json\n{}\n```", pretty(&Value::Array(joined)))
        }
    }
}

fn consolidation_reply(corpus: &Corpus) -> String {
    let groups: Vec<Value> = CANONICAL
        .iter()
        .zip(&corpus.raws)
        .map(|(c, raws)| {
            let mut members = raws.clone();
            members.sort();
            json!({"canonical": c.name, "members": members})
        })
        .collect();
    pretty(&json!({ "groups": groups }))
}

fn share(profile_shares: &[opinionflow::reporter::SentimentShare], label: &str) -> String {
    profile_shares
        .iter()
        .find(|s| s.label == label)
        .map(|s| s.percent.clone())
        .unwrap_or_else(|| "0.0".into())
}

fn sentiment_narrative(stats: &Statistics) -> String {
    let get = |l: &str| stats.sentiment.iter().find(|s| s.label == l);
    let (neg, neu, pos) = (get("negative"), get("neutral"), get("positive"));
    let fmt = |s: Option<&opinionflow::reporter::SentimentShare>| {
        s.map(|s| format!("{} posts, {}%", s.count, s.percent)).unwrap_or_default()
    };
    format!(
        "Across {} posts, reaction to the tariff announcement was predominantly negative ({}). \
         Neutral posts ({}) mostly relay news and official figures without taking a side, while \
         positive posts ({}) express confidence in the domestic response. A single post was \
         judged mixed. Negative posts concentrate on price increases and household costs; the \
         tone softens in posts about diplomatic and multilateral responses.",
        stats.total_posts,
        fmt(neg),
        fmt(neu),
        fmt(pos)
    )
}

fn topic_narrative(stats: &Statistics) -> String {
    let top: Vec<String> = stats
        .topics
        .iter()
        .take(5)
        .map(|t| format!("{} ({} mentions, {}%)", t.topic, t.mention_count, t.percent))
        .collect();
    format!(
        "The {} topic assignments fall into {} themes. The most discussed were: {}. Together these \
         cover the practical cost of tariffs for companies and households, the escalation between \
         the two countries and the wider economic fallout. Niche themes such as education policy \
         and imported pet food drew only a handful of mentions.",
        stats.total_assignments,
        stats.topics.len(),
        top.join("; ")
    )
}

fn synthesis_reply(stats: &Statistics) -> String {
    let profile = |name: &str| stats.topic_sentiment.iter().find(|p| p.topic == name);
    let pricing = profile(CANONICAL[10].name).expect("pricing topic present");
    let consumer = profile(CANONICAL[0].name).expect("consumer topic present");
    let responses = profile(CANONICAL[11].name).expect("responses topic present");
    let insights = format!(
        "Topics tied to prices are the most negative: {}% of mentions of corporate pricing and {}% \
         of mentions of imported consumer goods carry negative sentiment. Discussion of how other \
         economies respond is more balanced, with {}% negative and {}% neutral, since many of \
         these posts report statements rather than react to them.",
        share(&pricing.shares, "negative"),
        share(&consumer.shares, "negative"),
        share(&responses.shares, "negative"),
        share(&responses.shares, "neutral"),
    );
    let conclusions = "Public concern centers on rising costs rather than on the trade dispute \
         itself. Communication should explain concrete measures that shield households and small \
         exporters from price increases, track the pricing topics as an early indicator of \
         sentiment shifts, and give timely, factual coverage of international responses, which \
         currently anchors the more neutral part of the discussion.";
    pretty(&json!({
        "sentiment_topic_insights": insights,
        "conclusions_and_recommendations": conclusions,
    }))
}

pub struct ScriptSummary {
    pub responses: usize,
    pub statistics: Statistics,
}

/// Scripts every reply the golden run asks for. `posts` must be in
/// collected order.
pub fn write_script(
    writer: &mut MockScriptWriter,
    rng: &mut ChaCha8Rng,
    corpus: &Corpus,
    posts: &[GenPost],
) -> io::Result<ScriptSummary> {
    let mut responses = 0;
    writer.respond(QUERY_LONG, LONG_REPLY)?;
    writer.respond(QUERY_SHORT, SHORT_REPLY)?;
    writer.default_response(NO_EVENT_REPLY)?;
    responses += 2;

    let size = NonZeroUsize::new(10).expect("non-zero");
    let mut surplus: BTreeMap<String, usize> = BTreeMap::new();
    for (i, batch) in make_batches(posts, size).into_iter().enumerate() {
        let n = i + 1;
        let texts: Vec<&str> = batch.iter().map(|p| p.text.as_str()).collect();
        let mut labels: Vec<String> = batch.iter().map(|p| p.label.clone()).collect();
        if SURPLUS_BATCHES.contains(&n) {
            assert_eq!(batch.len(), 10, "surplus batches must be full");
            labels.push("negative".into());
            *surplus.entry("negative".into()).or_insert(0) += 1;
        }
        writer.respond(&batch_user_text(SENTIMENT_TASK, n, &texts), &sentiment_reply(rng, n, &labels))?;
        let lists: Vec<Vec<String>> = batch.iter().map(|p| p.topics.clone()).collect();
        writer.respond(&batch_user_text(TOPIC_TASK, n, &texts), &topic_reply(n, &lists))?;
        responses += 2;
    }

    let mut raws: Vec<String> = corpus.raw_to_canonical.keys().cloned().collect();
    raws.sort();
    writer.respond(&consolidation_user_text(&raws), &consolidation_reply(corpus))?;
    responses += 1;

    let sentiment: Vec<SentimentRecord> = posts
        .iter()
        .enumerate()
        .map(|(i, p)| SentimentRecord {
            batch_number: batch_number(i, size),
            post_text: p.text.clone(),
            sentiment: SentimentLabel::normalize(&p.label),
        })
        .collect();
    let topics: Vec<TopicRecord> = posts
        .iter()
        .enumerate()
        .map(|(i, p)| TopicRecord {
            batch_number: batch_number(i, size),
            post_text: p.text.clone(),
            topics: p.topics.clone(),
        })
        .collect();
    let mapping: BTreeMap<String, String> = corpus
        .raw_to_canonical
        .iter()
        .map(|(raw, c)| (raw.clone(), CANONICAL[*c].name.to_string()))
        .collect();
    let table = tabulate(&topics, &mapping);
    let payload = merge(&sentiment, &topics, &table, &mapping, &surplus).expect("generated artifacts merge");
    let statistics = compute_statistics(&payload);

    let spec = query_spec();
    let overview = sentiment_narrative(&statistics);
    let distribution = topic_narrative(&statistics);
    writer.respond(&sentiment_summary_request(&statistics, Some(&spec)), &overview)?;
    writer.respond(&topic_summary_request(&statistics, Some(&spec)), &distribution)?;
    writer.respond(
        &synthesis_request(&statistics, Some(&spec), &overview, &distribution),
        &synthesis_reply(&statistics),
    )?;
    responses += 3;

    Ok(ScriptSummary {
        responses,
        statistics,
    })
}
