//! Property checks for batching and for the per-post and conservation
//! invariants, driven through the real agents with synthetic backends.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use opinionflow::batching::{batch_number, make_batches, AgentConfig, DEFAULT_BATCH_SIZE};
use opinionflow::collector::PostRecord;
use opinionflow::gateway::json::REPAIR_INSTRUCTION;
use opinionflow::gateway::{
    message_digest, BackendError, ChatBackend, ChatCompletion, ChatRequest, CostLedger, Gateway,
    LoadedPrompt, PromptRole, RetryPolicy,
};
use opinionflow::reporter::{compute_statistics, merge};
use opinionflow::sentiment::{classify_posts, SentimentLabel};
use opinionflow::topic::{aggregate_topics, extract_posts, total_assignments};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{Ctx, Verdict};

const LAW_CASES: u32 = 1000;
const MAX_POSTS: usize = 5000;
const AGENT_CASES: u32 = 100;
const CHAOS_CASES: u32 = 1000;
const CHAOS_MAX_POSTS: usize = 150;

const LABELS: [&str; 3] = ["positive", "neutral", "negative"];
const SURPLUS_LABEL: &str = "mixed";
const WORDS: [&str; 8] = ["tariff", "prices", "exports", "寄快递", "soybeans", "\"quoted\"", "markets", "jobs"];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn stable_hash(text: &str) -> u64 {
    u64::from_str_radix(&message_digest(text)[..16], 16).expect("hex digest")
}

/// The label a well-behaved model gives this text.
fn true_label(text: &str) -> &'static str {
    LABELS[(stable_hash(text) % 3) as usize]
}

/// The topics a well-behaved model extracts from this text.
fn true_topics(text: &str) -> Vec<String> {
    let h = stable_hash(text);
    let n = 1 + (h % 3) as usize;
    let mut topics: Vec<String> = (0..n).map(|k| format!("topic {}", (h >> (8 * (k + 1))) % 23)).collect();
    topics.dedup();
    let mut seen = BTreeSet::new();
    topics.retain(|t| seen.insert(t.clone()));
    topics
}

fn posts(rng: &mut ChaCha8Rng, n: usize) -> Vec<PostRecord> {
    let at = NaiveDate::from_ymd_opt(2025, 4, 9).unwrap().and_hms_opt(12, 0, 0).unwrap();
    (0..n)
        .map(|i| {
            let words: Vec<&str> = (0..rng.gen_range(1..5)).map(|_| *WORDS.choose(rng).unwrap()).collect();
            PostRecord {
                user_id: format!("u{}", i % 17),
                timestamp: at,
                source_device: String::new(),
                reposts: 0,
                comments: 0,
                likes: 0,
                text: format!("#U.S. tariff# {} {i}", words.join(" ")),
            }
        })
        .collect()
}

fn completion(text: String) -> Result<ChatCompletion, BackendError> {
    Ok(ChatCompletion {
        text,
        prompt_tokens: 1,
        completion_tokens: 1,
    })
}

fn batch_texts(payload: &Value) -> Vec<String> {
    payload["posts"]
        .as_array()
        .map(|ps| ps.iter().map(|p| p["text"].as_str().unwrap_or_default().to_string()).collect())
        .unwrap_or_default()
}

/// Answers every batch perfectly and records what it was asked.
#[derive(Default)]
struct Echo {
    seen: Mutex<Vec<(String, usize, Vec<u64>, Vec<String>)>>,
}

impl ChatBackend for Echo {
    fn complete(&self, request: ChatRequest<'_>) -> Result<ChatCompletion, BackendError> {
        let payload: Value = serde_json::from_str(request.user).map_err(|e| BackendError::InvalidPayload(e.to_string()))?;
        let task = payload["task"].as_str().unwrap_or_default().to_string();
        let texts = batch_texts(&payload);
        let ids: Vec<u64> = payload["posts"]
            .as_array()
            .map(|ps| ps.iter().filter_map(|p| p["id"].as_u64()).collect())
            .unwrap_or_default();
        let batch = payload["batch"].as_u64().unwrap_or(0) as usize;
        let reply = if task == "sentiment" {
            json!(texts.iter().map(|t| true_label(t)).collect::<Vec<_>>())
        } else {
            json!(texts
                .iter()
                .enumerate()
                .map(|(i, t)| json!({"id": i + 1, "topics": true_topics(t)}))
                .collect::<Vec<_>>())
        };
        self.seen.lock().unwrap().push((task, batch, ids, texts));
        completion(reply.to_string())
    }

    fn name(&self) -> &str {
        "echo"
    }
}

fn gateway(backend: Arc<dyn ChatBackend>) -> Gateway {
    Gateway::new(backend, Arc::new(CostLedger::default())).with_retry(RetryPolicy::immediate())
}

fn check_partition(n: usize, size: NonZeroUsize) -> Result<(), TestCaseError> {
    let items: Vec<usize> = (0..n).collect();
    let batches = make_batches(&items, size);
    prop_assert_eq!(batches.len(), n.div_ceil(size.get()));
    for (k, b) in batches.iter().enumerate() {
        let last = k + 1 == batches.len();
        prop_assert!(!b.is_empty() && b.len() <= size.get());
        prop_assert!(last || b.len() == size.get());
        for &i in b.iter() {
            prop_assert_eq!(batch_number(i, size), k + 1);
        }
    }
    let flat: Vec<usize> = batches.concat();
    prop_assert_eq!(flat, items);
    Ok(())
}

fn check_agents(n: usize, workers: usize, seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let posts = posts(&mut rng, n);
    let echo = Arc::new(Echo::default());
    let gw = gateway(echo.clone());
    let cfg = AgentConfig {
        batch_size: DEFAULT_BATCH_SIZE,
        workers,
    };
    let sentiment = classify_posts(&posts, &LoadedPrompt::inline(PromptRole::Sentiment, "label"), &gw, &cfg)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let topics = extract_posts(&posts, &LoadedPrompt::inline(PromptRole::Topic, "topics"), &gw, &cfg)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;

    let expected_batches = n.div_ceil(10);
    let mut seen = echo.seen.lock().unwrap().clone();
    seen.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    for task in ["sentiment", "topic_extraction"] {
        let calls: Vec<_> = seen.iter().filter(|s| s.0 == task).collect();
        prop_assert_eq!(calls.len(), expected_batches);
        let mut sent = Vec::new();
        for (k, (_, batch, ids, texts)) in calls.iter().enumerate() {
            prop_assert_eq!(*batch, k + 1);
            prop_assert_eq!(ids.clone(), (1..=texts.len() as u64).collect::<Vec<_>>());
            sent.extend(texts.iter().cloned());
        }
        let input: Vec<String> = posts.iter().map(|p| p.text.clone()).collect();
        prop_assert_eq!(sent, input);
    }
    prop_assert_eq!(sentiment.records.len(), n);
    prop_assert_eq!(topics.records.len(), n);
    for (i, p) in posts.iter().enumerate() {
        let s = &sentiment.records[i];
        prop_assert_eq!(&s.post_text, &p.text);
        prop_assert_eq!(s.batch_number, i / 10 + 1);
        prop_assert_eq!(s.sentiment.as_str(), true_label(&p.text));
        let t = &topics.records[i];
        prop_assert_eq!(t.batch_number, i / 10 + 1);
        prop_assert_eq!(&t.topics, &true_topics(&p.text));
    }
    Ok(())
}

pub fn criterion_4(_: &mut Ctx) -> Verdict {
    runner(LAW_CASES)
        .run(&(0..=MAX_POSTS), |n| check_partition(n, DEFAULT_BATCH_SIZE))
        .map_err(|e| format!("batch size 10: {e}"))?;
    runner(LAW_CASES)
        .run(&(0..=MAX_POSTS, 1..=64usize), |(n, size)| {
            check_partition(n, NonZeroUsize::new(size).unwrap())
        })
        .map_err(|e| format!("arbitrary batch size: {e}"))?;
    runner(AGENT_CASES)
        .run(&(0..=MAX_POSTS, 1..=8usize, any::<u64>()), |(n, workers, seed)| {
            check_agents(n, workers, seed)
        })
        .map_err(|e| format!("agents: {e}"))?;
    Ok(format!(
        "{LAW_CASES} cases N in 0..={MAX_POSTS} (size 10) + {LAW_CASES} with sizes 1..=64: ceil(N/size) batches, order kept, batch numbers match; {AGENT_CASES} agent runs send and return posts in order"
    ))
}

/// A model that misbehaves at random: wrong answer counts, unparseable
/// replies, shuffled ids, transient errors and sloppy consolidation. Never
/// fails the same message twice in a way that would abort a batch.
struct Chaos {
    seed: u64,
    attempts: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
}

impl Chaos {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            attempts: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    fn batch_reply(rng: &mut ChaCha8Rng, task: &str, texts: &[String], allow_malformed: bool) -> String {
        let answers: Vec<Value> = texts
            .iter()
            .map(|t| if task == "sentiment" { json!(true_label(t)) } else { json!(true_topics(t)) })
            .collect();
        let mode = rng.gen_range(0..100);
        let mut answers = match mode {
            0..=54 => answers,
            55..=69 => answers[..rng.gen_range(0..=answers.len())].to_vec(),
            70..=84 => {
                let extra = if task == "sentiment" { json!(SURPLUS_LABEL) } else { json!(["surplus topic"]) };
                let mut a = answers;
                a.extend(std::iter::repeat(extra).take(rng.gen_range(1..=3)));
                a
            }
            85..=94 if allow_malformed => return ["I cannot help with that.", "{\"labels\": [", "```json\nnot json\n```"].choose(rng).unwrap().to_string(),
            _ => {
                // ids in scrambled order
                let mut ided: Vec<Value> = answers
                    .into_iter()
                    .enumerate()
                    .map(|(i, a)| {
                        if task == "sentiment" {
                            json!({"id": i + 1, "sentiment": a})
                        } else {
                            json!({"id": i + 1, "topics": a})
                        }
                    })
                    .collect();
                ided.shuffle(rng);
                return json!({ "results": ided }).to_string();
            }
        };
        if rng.gen_bool(0.5) {
            answers = answers
                .into_iter()
                .enumerate()
                .map(|(i, a)| if task == "sentiment" { json!({"id": i + 1, "label": a}) } else { json!({"id": i + 1, "topics": a}) })
                .collect();
        }
        format!("```json\n{}\n```", Value::Array(answers))
    }

    fn groups_reply(rng: &mut ChaCha8Rng, topics: &[String], existing: &[String]) -> String {
        if rng.gen_ratio(1, 10) {
            return "Sorry, that is too many topics.".into();
        }
        let mut names: Vec<String> = existing.to_vec();
        names.extend((0..rng.gen_range(1..=6)).map(|k| format!("theme {k}")));
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for t in topics {
            if rng.gen_ratio(1, 8) {
                continue;
            }
            groups.entry(names.choose(rng).unwrap().clone()).or_default().push(t.clone());
        }
        if let (Some(t), true) = (topics.first(), rng.gen_ratio(1, 5)) {
            // the same member claimed twice, plus an invented one
            groups.entry("duplicate claim".into()).or_default().extend([t.clone(), "invented topic".into()]);
        }
        let groups: Vec<Value> = groups.into_iter().map(|(c, m)| json!({"canonical": c, "members": m})).collect();
        json!({ "groups": groups }).to_string()
    }
}

impl ChatBackend for Chaos {
    fn complete(&self, request: ChatRequest<'_>) -> Result<ChatCompletion, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let user = request.user;
        let attempt = {
            let mut attempts = self.attempts.lock().unwrap();
            let a = attempts.entry(user.to_string()).or_insert(0);
            *a += 1;
            *a
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stable_hash(user) ^ attempt as u64);
        if attempt == 1 && rng.gen_ratio(1, 10) {
            return Err(BackendError::RateLimited {
                message: "slow down".into(),
                retry_after: None,
            });
        }
        let suffix = format!("\n\n{REPAIR_INSTRUCTION}");
        let (base, repair) = match user.strip_suffix(&suffix) {
            Some(b) => (b, true),
            None => (user, false),
        };
        let payload: Value = serde_json::from_str(base).map_err(|e| BackendError::InvalidPayload(e.to_string()))?;
        let strings = |key: &str| -> Vec<String> {
            payload[key]
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default()
        };
        if let Some(task) = payload["task"].as_str() {
            // a transient error leaves attempt 2 as the first real answer
            let first_answer = attempt <= 2;
            return completion(Self::batch_reply(&mut rng, task, &batch_texts(&payload), first_answer && !repair));
        }
        if payload.get("unassigned_topics").is_some() {
            return completion(Self::groups_reply(&mut rng, &strings("unassigned_topics"), &strings("existing_canonical_topics")));
        }
        completion(Self::groups_reply(&mut rng, &strings("topics"), &[]))
    }

    fn name(&self) -> &str {
        "chaos"
    }
}

/// Positions of `missing` answers must form a suffix of each batch.
fn trailing_only(flags: &[bool]) -> bool {
    flags.chunks(10).all(|b| b.iter().skip_while(|m| !**m).all(|m| *m))
}

fn check_chaos(n: usize, workers: usize, seed: u64) -> Result<(), TestCaseError> {
    let fail = |e: String| TestCaseError::fail(e);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let posts = posts(&mut rng, n);
    let chaos = Arc::new(Chaos::new(seed));
    let gw = gateway(chaos.clone());
    let cfg = AgentConfig {
        batch_size: DEFAULT_BATCH_SIZE,
        workers,
    };
    let sentiment = classify_posts(&posts, &LoadedPrompt::inline(PromptRole::Sentiment, "label"), &gw, &cfg)
        .map_err(|e| fail(e.to_string()))?;
    let topics = extract_posts(&posts, &LoadedPrompt::inline(PromptRole::Topic, "topics"), &gw, &cfg)
        .map_err(|e| fail(e.to_string()))?;

    // one row per post, in input order, each either right or marked as missing
    prop_assert_eq!(sentiment.records.len(), n);
    prop_assert_eq!(topics.records.len(), n);
    let mut unlabeled = Vec::with_capacity(n);
    let mut untagged = Vec::with_capacity(n);
    for (i, p) in posts.iter().enumerate() {
        let s = &sentiment.records[i];
        let t = &topics.records[i];
        prop_assert_eq!(&s.post_text, &p.text);
        prop_assert_eq!(&t.post_text, &p.text);
        prop_assert_eq!(s.batch_number, i / 10 + 1);
        prop_assert_eq!(t.batch_number, i / 10 + 1);
        let missing = s.sentiment.as_str() == SentimentLabel::UNLABELED;
        prop_assert!(missing || s.sentiment.as_str() == true_label(&p.text), "post {i}: {}", s.sentiment);
        unlabeled.push(missing);
        prop_assert!(t.topics.is_empty() || t.topics == true_topics(&p.text), "post {i}: {:?}", t.topics);
        untagged.push(t.topics.is_empty());
    }
    prop_assert!(trailing_only(&unlabeled), "unlabeled posts are not trailing");
    prop_assert!(trailing_only(&untagged), "untagged posts are not trailing");

    let summary = &sentiment.summary;
    prop_assert!(summary.is_consistent());
    prop_assert_eq!(summary.total_posts, n);
    prop_assert!(summary.surplus.keys().all(|k| k == SURPLUS_LABEL));
    prop_assert_eq!(summary.label_tally().values().sum::<usize>(), n + summary.surplus_total());

    let consolidator = LoadedPrompt::inline(PromptRole::TopicConsolidator, "merge");
    let agg = aggregate_topics(&topics.records, Some((&consolidator, &gw))).map_err(|e| fail(e.to_string()))?;
    let universe: BTreeSet<String> = topics.records.iter().flat_map(|r| r.topics.iter().cloned()).collect();
    prop_assert_eq!(agg.mapping.keys().cloned().collect::<BTreeSet<_>>(), universe.clone());
    let assignments = total_assignments(&topics.records);
    prop_assert_eq!(agg.topics.iter().map(|t| t.mention_count).sum::<usize>(), assignments);
    let mut recount: BTreeMap<&str, usize> = BTreeMap::new();
    for raw in topics.records.iter().flat_map(|r| &r.topics) {
        *recount.entry(agg.mapping[raw].as_str()).or_default() += 1;
    }
    for t in &agg.topics {
        prop_assert_eq!(recount.get(t.canonical_name.as_str()).copied(), Some(t.mention_count));
    }
    let members: Vec<&String> = agg.topics.iter().flat_map(|t| &t.member_raw_topics).collect();
    prop_assert_eq!(members.len(), universe.len());
    prop_assert_eq!(members.into_iter().cloned().collect::<BTreeSet<_>>(), universe);

    let payload = merge(&sentiment.records, &topics.records, &agg.topics, &agg.mapping, &summary.surplus)
        .map_err(|e| fail(e.to_string()))?;
    let stats = compute_statistics(&payload);
    prop_assert_eq!(stats.total_posts, n);
    prop_assert_eq!(stats.total_labels, n + summary.surplus_total());
    prop_assert_eq!(stats.sentiment.iter().map(|s| s.count).sum::<usize>(), stats.total_labels);
    prop_assert_eq!(stats.total_assignments, assignments);
    prop_assert_eq!(stats.topics.iter().map(|t| t.mention_count).sum::<usize>(), assignments);
    prop_assert!(stats.topics.windows(2).all(|w| w[0].mention_count >= w[1].mention_count));
    let mut by_label: BTreeMap<String, usize> = BTreeMap::new();
    for profile in &stats.topic_sentiment {
        prop_assert_eq!(profile.shares.iter().map(|s| s.count).sum::<usize>(), profile.mention_count);
        for s in &profile.shares {
            *by_label.entry(s.label.clone()).or_default() += s.count;
        }
    }
    let mut expected: BTreeMap<String, usize> = BTreeMap::new();
    for (s, t) in sentiment.records.iter().zip(&topics.records) {
        if !t.topics.is_empty() {
            *expected.entry(s.sentiment.as_str().to_string()).or_default() += t.topics.len();
        }
    }
    prop_assert_eq!(by_label, expected);
    prop_assert!(chaos.calls.load(Ordering::Relaxed) >= 2 * n.div_ceil(10));
    Ok(())
}

pub fn criterion_5(_: &mut Ctx) -> Verdict {
    runner(CHAOS_CASES)
        .run(&(0..=CHAOS_MAX_POSTS, 1..=6usize, any::<u64>()), |(n, workers, seed)| {
            check_chaos(n, workers, seed)
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{CHAOS_CASES} chaotic-model runs, N in 0..={CHAOS_MAX_POSTS}: one row per post in order, misses only trailing, per-post counts sum to N, mention counts sum to total assignments, crosstab marginals agree (surplus labels counted only in the label tally)"
    ))
}
