//! Topic agent: extract zero or more topics per post, then consolidate the
//! distinct raw topic strings into canonical high-level topics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::batching::{
    answer_array, batch_number, batch_user_text, make_batches, order_by_id, request_aligned,
    run_batches, AgentConfig, BatchError,
};
use crate::collector::PostRecord;
use crate::gateway::json::extract_json;
use crate::gateway::{Gateway, GatewayError, LoadedPrompt};
use crate::sentiment::check_header;

/// Task name carried in every batch request.
pub const TOPIC_TASK: &str = "topic_extraction";
pub const TOPIC_CSV: &str = "Topic_extraction_result.csv";
pub const TOPIC_HEADER: [&str; 3] = ["batch_number", "post_text", "topics"];
pub const AGGREGATED_CSV: &str = "Aggregated_topics.csv";
pub const AGGREGATED_HEADER: [&str; 3] = ["rank", "canonical_topic", "mention_count"];
pub const MAPPING_CSV: &str = "Topic_mapping.csv";
pub const MAPPING_HEADER: [&str; 2] = ["raw_topic", "canonical_topic"];

/// Separator between topics inside one CSV cell.
pub const TOPIC_SEPARATOR: &str = "; ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicRecord {
    pub batch_number: usize,
    pub post_text: String,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedTopic {
    pub canonical_name: String,
    pub mention_count: usize,
    pub member_raw_topics: Vec<String>,
}

/// Trims, collapses internal whitespace and replaces `;` (the cell
/// separator) with `,`. Returns `None` for blank topics.
pub fn normalize_topic(raw: &str) -> Option<String> {
    let s = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace(';', ",");
    let s = s.trim().to_string();
    (!s.is_empty()).then_some(s)
}

fn clean_list(raw: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    raw.into_iter()
        .filter_map(|t| normalize_topic(&t))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

fn string_list(value: &Value) -> Option<Vec<String>> {
    match value {
        Value::Null => Some(Vec::new()),
        Value::String(s) => Some(s.split(';').map(str::to_string).collect()),
        Value::Array(items) => items
            .iter()
            .map(|t| t.as_str().map(str::to_string))
            .collect(),
        _ => None,
    }
}

fn parse_topic_lists(value: &Value) -> Option<Vec<Vec<String>>> {
    let items = answer_array(value, &["topics", "results", "posts"])?;
    order_by_id(items)
        .into_iter()
        .map(|item| match item {
            Value::Object(o) => o.get("topics").and_then(string_list).map(clean_list),
            other => string_list(other).map(clean_list),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchTopics {
    pub topics: Vec<Vec<String>>,
    pub warning: Option<String>,
}

/// Extracts topic lists for one batch, aligned to batch order.
///
/// A persistent length mismatch leaves unanswered posts with an empty list
/// and drops extra lists, with a warning.
pub fn extract_batch<S: AsRef<str>>(
    batch_number: usize,
    batch: &[S],
    prompt: &LoadedPrompt,
    gateway: &Gateway,
) -> Result<BatchTopics, BatchError> {
    let user_text = batch_user_text(TOPIC_TASK, batch_number, batch);
    let aligned = request_aligned(gateway, prompt, &user_text, batch.len(), parse_topic_lists)?;
    let mut topics = aligned.items;
    let warning = aligned.mismatch.map(|(expected, got)| {
        topics.resize(expected, Vec::new());
        format!("batch {batch_number}: {got} topic lists for {expected} posts; unmatched posts left untagged")
    });
    if let Some(w) = &warning {
        tracing::warn!("{w}");
    }
    Ok(BatchTopics { topics, warning })
}

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("topic batch {batch} failed: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: BatchError,
    },
    #[error("topic consolidation failed: {0}")]
    Consolidation(#[from] GatewayError),
    #[error("topic CSV error at {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("inconsistent topic artifacts: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone)]
pub struct TopicOutcome {
    pub records: Vec<TopicRecord>,
    pub distinct_raw_topics: usize,
    pub warnings: Vec<String>,
}

/// Number of distinct raw topic strings across all records.
pub fn distinct_topics(records: &[TopicRecord]) -> usize {
    records
        .iter()
        .flat_map(|r| r.topics.iter())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Total (post, topic) assignments.
pub fn total_assignments(records: &[TopicRecord]) -> usize {
    records.iter().map(|r| r.topics.len()).sum()
}

pub fn extract_posts(
    posts: &[PostRecord],
    prompt: &LoadedPrompt,
    gateway: &Gateway,
    config: &AgentConfig,
) -> Result<TopicOutcome, TopicError> {
    let texts: Vec<&str> = posts.iter().map(|p| p.text.as_str()).collect();
    let batches = make_batches(&texts, config.batch_size);
    let results = run_batches(&batches, config.workers, |n, batch| {
        extract_batch(n, batch, prompt, gateway)
    })
    .map_err(|(batch, source)| TopicError::Batch { batch, source })?;

    let mut lists = Vec::with_capacity(posts.len());
    let mut warnings = Vec::new();
    for batch in results {
        warnings.extend(batch.warning);
        lists.extend(batch.topics);
    }
    let records: Vec<TopicRecord> = texts
        .iter()
        .zip(lists)
        .enumerate()
        .map(|(i, (text, topics))| TopicRecord {
            batch_number: batch_number(i, config.batch_size),
            post_text: text.to_string(),
            topics,
        })
        .collect();
    let distinct_raw_topics = distinct_topics(&records);
    tracing::info!(distinct_raw_topics, "topic extraction finished");
    Ok(TopicOutcome {
        records,
        distinct_raw_topics,
        warnings,
    })
}

/// [`extract_posts`], then write `Topic_extraction_result.csv` to `out_path`.
pub fn run_topic_extraction(
    posts: &[PostRecord],
    prompt: &LoadedPrompt,
    gateway: &Gateway,
    config: &AgentConfig,
    out_path: &Path,
) -> Result<TopicOutcome, TopicError> {
    let outcome = extract_posts(posts, prompt, gateway, config)?;
    write_topic_csv(out_path, &outcome.records).map_err(|source| TopicError::Csv {
        path: out_path.display().to_string(),
        source,
    })?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    Llm,
    ExactStringFallback,
}

#[derive(Debug, Clone)]
pub struct AggregationOutcome {
    pub topics: Vec<AggregatedTopic>,
    /// Total map from every raw topic to its canonical topic.
    pub mapping: BTreeMap<String, String>,
    pub method: AggregationMethod,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Group {
    canonical: String,
    members: Vec<String>,
}

fn parse_groups(value: &Value) -> Option<Vec<Group>> {
    let items = answer_array(value, &["groups", "canonical_topics", "topics"])?;
    items
        .iter()
        .map(|g| {
            let o = g.as_object()?;
            let canonical = ["canonical", "canonical_topic", "name", "topic"]
                .iter()
                .find_map(|k| o.get(*k).and_then(Value::as_str))?;
            let members = ["members", "raw_topics", "topics"]
                .iter()
                .find_map(|k| o.get(*k).and_then(string_list))
                .unwrap_or_default();
            Some(Group {
                canonical: canonical.to_string(),
                members,
            })
        })
        .collect()
}

/// The consolidation request: the sorted distinct raw topics.
pub fn consolidation_user_text(raw_topics: &[String]) -> String {
    serde_json::to_string_pretty(&json!({ "topics": raw_topics })).expect("serializes")
}

/// The repair request listing topics the first reply left out.
pub fn consolidation_repair_text(omitted: &[String], canonical: &[String]) -> String {
    serde_json::to_string_pretty(&json!({
        "unassigned_topics": omitted,
        "existing_canonical_topics": canonical,
    }))
    .expect("serializes")
}

fn apply_groups(
    groups: Vec<Group>,
    universe: &BTreeSet<String>,
    mapping: &mut BTreeMap<String, String>,
    canonical_order: &mut Vec<String>,
    warnings: &mut Vec<String>,
) {
    for group in groups {
        let Some(canonical) = normalize_topic(&group.canonical) else {
            warnings.push("consolidation returned a group with a blank name; ignored".into());
            continue;
        };
        for member in group.members.iter().filter_map(|m| normalize_topic(m)) {
            if !universe.contains(&member) {
                warnings.push(format!("consolidation mentioned unknown topic {member:?}; ignored"));
                continue;
            }
            match mapping.get(&member) {
                Some(existing) if *existing != canonical => warnings.push(format!(
                    "topic {member:?} assigned to both {existing:?} and {canonical:?}; kept the first"
                )),
                Some(_) => {}
                None => {
                    mapping.insert(member, canonical.clone());
                    if !canonical_order.contains(&canonical) {
                        canonical_order.push(canonical.clone());
                    }
                }
            }
        }
    }
}

fn consolidate_with_llm(
    universe: &BTreeSet<String>,
    prompt: &LoadedPrompt,
    gateway: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<BTreeMap<String, String>, GatewayError> {
    let raw: Vec<String> = universe.iter().cloned().collect();
    let mut mapping = BTreeMap::new();
    let mut canonical_order = Vec::new();

    let reply = gateway.chat(prompt, &consolidation_user_text(&raw))?;
    match extract_json(&reply).as_ref().and_then(parse_groups) {
        Some(groups) => apply_groups(groups, universe, &mut mapping, &mut canonical_order, warnings),
        None => warnings.push("consolidation reply could not be parsed".into()),
    }

    let omitted: Vec<String> = raw
        .iter()
        .filter(|t| !mapping.contains_key(*t))
        .cloned()
        .collect();
    if !omitted.is_empty() {
        tracing::warn!(omitted = omitted.len(), "consolidation omitted topics; re-prompting once");
        let reply = gateway.chat(prompt, &consolidation_repair_text(&omitted, &canonical_order))?;
        match extract_json(&reply).as_ref().and_then(parse_groups) {
            Some(groups) => {
                apply_groups(groups, universe, &mut mapping, &mut canonical_order, warnings)
            }
            None => warnings.push("consolidation repair reply could not be parsed".into()),
        }
    }

    for topic in &raw {
        if !mapping.contains_key(topic) {
            warnings.push(format!("topic {topic:?} left unconsolidated; kept as its own canonical topic"));
            mapping.insert(topic.clone(), topic.clone());
        }
    }
    Ok(mapping)
}

/// Groups raw topics that differ only in case and whitespace. The most
/// frequent surface form names the group (ties: lexicographically smallest).
pub fn fallback_mapping(records: &[TopicRecord]) -> BTreeMap<String, String> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for t in records.iter().flat_map(|r| r.topics.iter()) {
        *freq.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut groups: HashMap<String, Vec<(&str, usize)>> = HashMap::new();
    for (topic, n) in freq {
        let key = topic
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        groups.entry(key).or_default().push((topic, n));
    }
    let mut mapping = BTreeMap::new();
    for members in groups.values() {
        let name = members
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
            .expect("non-empty group")
            .0;
        for (m, _) in members {
            mapping.insert(m.to_string(), name.to_string());
        }
    }
    mapping
}

/// Builds the canonical topic table from per-post records and a total
/// raw→canonical mapping. Counts are assignments, sorted by count
/// descending then name ascending.
pub fn tabulate(records: &[TopicRecord], mapping: &BTreeMap<String, String>) -> Vec<AggregatedTopic> {
    let mut table: BTreeMap<&str, (usize, BTreeSet<&str>)> = BTreeMap::new();
    for topic in records.iter().flat_map(|r| r.topics.iter()) {
        let canonical = mapping.get(topic).map(String::as_str).unwrap_or(topic);
        let entry = table.entry(canonical).or_default();
        entry.0 += 1;
        entry.1.insert(topic);
    }
    let mut out: Vec<AggregatedTopic> = table
        .into_iter()
        .map(|(name, (count, members))| AggregatedTopic {
            canonical_name: name.to_string(),
            mention_count: count,
            member_raw_topics: members.into_iter().map(str::to_string).collect(),
        })
        .collect();
    out.sort_by(|a, b| {
        b.mention_count
            .cmp(&a.mention_count)
            .then_with(|| a.canonical_name.cmp(&b.canonical_name))
    });
    out
}

/// Consolidates raw topics into canonical topics.
///
/// With a consolidation prompt, one LLM call maps the distinct raw topics;
/// omissions get one repair re-prompt and anything still unmapped becomes
/// its own canonical topic. Without a prompt, [`fallback_mapping`] is used.
pub fn aggregate_topics(
    records: &[TopicRecord],
    consolidator: Option<(&LoadedPrompt, &Gateway)>,
) -> Result<AggregationOutcome, TopicError> {
    let universe: BTreeSet<String> = records
        .iter()
        .flat_map(|r| r.topics.iter().cloned())
        .collect();
    let mut warnings = Vec::new();
    let (mapping, method) = match consolidator {
        _ if universe.is_empty() => (BTreeMap::new(), AggregationMethod::ExactStringFallback),
        Some((prompt, gateway)) => (
            consolidate_with_llm(&universe, prompt, gateway, &mut warnings)?,
            AggregationMethod::Llm,
        ),
        None => (fallback_mapping(records), AggregationMethod::ExactStringFallback),
    };
    for w in &warnings {
        tracing::warn!("{w}");
    }
    let topics = tabulate(records, &mapping);
    tracing::info!(canonical = topics.len(), raw = universe.len(), ?method, "topics consolidated");
    Ok(AggregationOutcome {
        topics,
        mapping,
        method,
        warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct TopicRow {
    batch_number: usize,
    post_text: String,
    topics: String,
}

pub fn write_topic_csv(path: &Path, records: &[TopicRecord]) -> Result<(), csv::Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(TOPIC_HEADER)?;
    for r in records {
        w.serialize(TopicRow {
            batch_number: r.batch_number,
            post_text: r.post_text.clone(),
            topics: r.topics.join(TOPIC_SEPARATOR),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_topic_csv(path: &Path) -> Result<Vec<TopicRecord>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    check_header(r.headers()?, &TOPIC_HEADER, path)?;
    r.deserialize::<TopicRow>()
        .map(|row| {
            let row = row?;
            Ok(TopicRecord {
                batch_number: row.batch_number,
                post_text: row.post_text,
                topics: if row.topics.is_empty() {
                    Vec::new()
                } else {
                    row.topics
                        .split(TOPIC_SEPARATOR)
                        .map(str::to_string)
                        .collect()
                },
            })
        })
        .collect()
}

pub fn write_aggregated_csv(path: &Path, topics: &[AggregatedTopic]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(AGGREGATED_HEADER)?;
    for (i, t) in topics.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            t.canonical_name.clone(),
            t.mention_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mapping_csv(path: &Path, mapping: &BTreeMap<String, String>) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(MAPPING_HEADER)?;
    for (raw, canonical) in mapping {
        w.write_record([raw, canonical])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mapping_csv(path: &Path) -> Result<BTreeMap<String, String>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    check_header(r.headers()?, &MAPPING_HEADER, path)?;
    r.deserialize::<(String, String)>().collect()
}

/// Reads `Aggregated_topics.csv` and attaches members from the mapping.
pub fn read_aggregated_csv(
    path: &Path,
    mapping: &BTreeMap<String, String>,
) -> Result<Vec<AggregatedTopic>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    check_header(r.headers()?, &AGGREGATED_HEADER, path)?;
    let mut members: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (raw, canonical) in mapping {
        members.entry(canonical).or_default().push(raw.clone());
    }
    r.deserialize::<(usize, String, usize)>()
        .map(|row| {
            let (_, name, count) = row?;
            Ok(AggregatedTopic {
                member_raw_topics: members.get(name.as_str()).cloned().unwrap_or_default(),
                canonical_name: name,
                mention_count: count,
            })
        })
        .collect()
}

/// Writes both consolidation artifacts.
pub fn write_aggregation(dir: &Path, outcome: &AggregationOutcome) -> Result<(), TopicError> {
    let agg = dir.join(AGGREGATED_CSV);
    write_aggregated_csv(&agg, &outcome.topics).map_err(|source| TopicError::Csv {
        path: agg.display().to_string(),
        source,
    })?;
    let map = dir.join(MAPPING_CSV);
    write_mapping_csv(&map, &outcome.mapping).map_err(|source| TopicError::Csv {
        path: map.display().to_string(),
        source,
    })
}
