use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::Duration;

use opinionflow::sentiment::read_sentiment_csv;
use opinionflow::topic::{distinct_topics, read_aggregated_csv, read_mapping_csv, read_topic_csv, total_assignments};
use serde_json::Value;

use crate::common::{self, differing_artifacts, golden_run, run_dir, GOLDEN_QUERY};
use crate::{Ctx, Verdict};

/// Expected sentiment table: label, count, percent of 1,572 posts.
const SENTIMENT: [(&str, usize, &str); 4] = [
    ("negative", 995, "63.3"),
    ("neutral", 371, "23.6"),
    ("positive", 207, "13.2"),
    ("mixed", 1, "0.1"),
];
const TOTAL_POSTS: usize = 1572;
const RUNTIME_LIMIT: Duration = Duration::from_secs(60);

const RAW_TOPICS: usize = 361;
const TOTAL_ASSIGNMENTS: usize = 2869;
/// Canonical topics and their mention counts.
const EXPECTED_TOPICS: [(&str, usize); 22] = [
    ("Impact of US tariff on imported consumer goods for ordinary residents", 305),
    ("Escalation of the China–US trade war and China's countermeasures", 338),
    ("Challenges to the global multilateral trading system", 110),
    ("Ripple effects of US tariff policy on the global economy", 409),
    ("Policy suggestions for structural adjustment of China's economy under US tariff", 98),
    ("Support for small and medium-sized enterprises and regulation of e-commerce development", 6),
    ("Education policy adjustments from the perspective of cultural security", 2),
    ("Impact of US tariff on the channels and prices of imported pet food", 1),
    ("Response of China's Ministry of Foreign Affairs to US tariff increases", 64),
    ("Disputes over international multilateral trade order under the China–US trade war", 101),
    ("Impact of US tariff policy on corporate product pricing structure", 433),
    ("Responses of major global economies to US tariff increases", 288),
    ("Economic cooperation positions of China-Japan-Korea and China-Europe in tariff disputes", 48),
    ("Energy and tariff negotiations in US–EU trade disputes", 39),
    ("Use of energy exports by the US as a tool of trade pressure", 20),
    ("Countermeasures of the EU against US trade pressure", 60),
    ("US tariff policy may widen the wealth gap", 127),
    ("US tariff increases on multiple countries", 78),
    ("Impact of US tariff on reshoring of manufacturing", 47),
    ("Strategic and security considerations behind US tariff policy", 80),
    ("Impact of US tariff policy on imported consumer goods for ordinary residents", 167),
    ("Impact of US tariff policy on reshoring of manufacturing", 48),
];
const SPOT_ROWS: [usize; 4] = [433, 409, 338, 305];

const SECTION_TITLES: [&str; 4] = [
    "Sentiment Overview",
    "Topic Distribution",
    "Sentiment–Topic Insights",
    "Conclusions & Recommendations",
];
const PRICING_TOPICS: [&str; 2] = [
    "Impact of US tariff policy on corporate product pricing structure",
    "Impact of US tariff on imported consumer goods for ordinary residents",
];

const LEDGER_BUDGET: usize = 400;
/// 1 parse + 158 x 2 batches + 2 surplus-label retries + 1 consolidation + 3 report calls.
const EXPECTED_INVOCATIONS: usize = 323;

fn json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn criterion_1(ctx: &mut Ctx) -> Verdict {
    let (dir, elapsed) = ctx.golden()?;
    ensure(elapsed < RUNTIME_LIMIT, || format!("run took {elapsed:?}"))?;

    let manifest = json(&dir.join("manifest.json"))?;
    for stage in ["a0_coordinator", "a1_sentiment", "a2_topic", "a3_report"] {
        ensure(common::stage_status(&manifest, stage) == "done", || format!("{stage} not done"))?;
    }

    // independent recount: per-post labels plus the recorded surplus labels
    let records = read_sentiment_csv(&dir.join("Sentiment_analysis_result.csv")).map_err(|e| e.to_string())?;
    ensure(records.len() == TOTAL_POSTS, || format!("{} sentiment rows", records.len()))?;
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for r in &records {
        *tally.entry(r.sentiment.as_str().to_string()).or_default() += 1;
    }
    if let Some(surplus) = manifest["sentiment_summary"]["surplus"].as_object() {
        for (label, n) in surplus {
            *tally.entry(label.clone()).or_default() += n.as_u64().unwrap_or(0) as usize;
        }
    }
    for (label, count, _) in SENTIMENT {
        ensure(tally.get(label) == Some(&count), || format!("recount {label}: {:?}", tally.get(label)))?;
    }

    let report = json(&dir.join("report.json"))?;
    let stats = &report["statistics"];
    ensure(stats["total_posts"] == TOTAL_POSTS, || format!("total_posts {}", stats["total_posts"]))?;
    let shares: Vec<(String, u64, String)> = stats["sentiment"]
        .as_array()
        .ok_or("no sentiment table in report.json")?
        .iter()
        .map(|s| {
            (
                s["label"].as_str().unwrap_or_default().to_string(),
                s["count"].as_u64().unwrap_or_default(),
                s["percent"].as_str().unwrap_or_default().to_string(),
            )
        })
        .collect();
    let want: Vec<(String, u64, String)> = SENTIMENT
        .iter()
        .map(|(l, c, p)| (l.to_string(), *c as u64, p.to_string()))
        .collect();
    ensure(shares == want, || format!("sentiment table {shares:?}"))?;

    let text = fs::read_to_string(dir.join("report.txt")).map_err(|e| e.to_string())?;
    let appendix = text
        .split_once("== Statistics Appendix ==")
        .map(|(_, a)| a)
        .ok_or("report.txt has no statistics appendix")?;
    for (label, count, percent) in SENTIMENT {
        let row = [label.to_string(), count.to_string(), format!("{percent}%")];
        ensure(
            appendix.lines().any(|l| l.split_whitespace().eq(row.iter().map(String::as_str))),
            || format!("appendix lacks row {row:?}"),
        )?;
    }
    let mut last = 0;
    for title in SECTION_TITLES {
        let at = text.find(&format!("== {title} ==")).ok_or_else(|| format!("missing section {title}"))?;
        ensure(at >= last, || format!("section {title} out of order"))?;
        last = at;
    }
    ensure(!text.contains("[generation failed]"), || "a narrative section failed".into())?;

    for topic in PRICING_TOPICS {
        let profile = stats["topic_sentiment"]
            .as_array()
            .and_then(|ps| ps.iter().find(|p| p["topic"] == topic))
            .ok_or_else(|| format!("no profile for {topic}"))?;
        let total = profile["mention_count"].as_u64().unwrap_or(0);
        let negative = profile["shares"]
            .as_array()
            .and_then(|s| s.iter().find(|s| s["label"] == "negative"))
            .and_then(|s| s["count"].as_u64())
            .unwrap_or(0);
        ensure(negative * 10 > total * 7, || format!("{topic}: {negative}/{total} negative"))?;
    }

    Ok(format!(
        "{TOTAL_POSTS} posts, 207/371/995/1 = 13.2/23.6/63.3/0.1%, four sections, pricing topics >70% negative, {:.2}s (< {}s)",
        elapsed.as_secs_f64(),
        RUNTIME_LIMIT.as_secs()
    ))
}

pub fn criterion_2(ctx: &mut Ctx) -> Verdict {
    let (dir, _) = ctx.golden()?;
    let records = read_topic_csv(&dir.join("Topic_extraction_result.csv")).map_err(|e| e.to_string())?;
    let raw = distinct_topics(&records);
    ensure(raw == RAW_TOPICS, || format!("{raw} distinct raw topics"))?;
    let assignments = total_assignments(&records);
    ensure(assignments == TOTAL_ASSIGNMENTS, || format!("{assignments} assignments"))?;

    let mapping = read_mapping_csv(&dir.join("Topic_mapping.csv")).map_err(|e| e.to_string())?;
    let table = read_aggregated_csv(&dir.join("Aggregated_topics.csv"), &mapping).map_err(|e| e.to_string())?;
    let got: BTreeSet<(String, usize)> = table.iter().map(|t| (t.canonical_name.clone(), t.mention_count)).collect();
    let want: BTreeSet<(String, usize)> = EXPECTED_TOPICS.iter().map(|(n, c)| (n.to_string(), *c)).collect();
    ensure(table.len() == 22, || format!("{} canonical topics", table.len()))?;
    let missing: Vec<_> = want.difference(&got).collect();
    let extra: Vec<_> = got.difference(&want).collect();
    ensure(missing.is_empty() && extra.is_empty(), || format!("missing {missing:?}, unexpected {extra:?}"))?;
    let sum: usize = table.iter().map(|t| t.mention_count).sum();
    ensure(sum == TOTAL_ASSIGNMENTS, || format!("table sums to {sum}"))?;
    let top: Vec<usize> = table.iter().take(4).map(|t| t.mention_count).collect();
    ensure(top == SPOT_ROWS, || format!("top rows {top:?}"))?;
    Ok(format!("{raw} raw topics -> 22 canonical topics equal to the expected table, sum {sum}, top rows {top:?}"))
}

pub fn criterion_6(ctx: &mut Ctx) -> Verdict {
    let (first, _) = ctx.golden()?;
    let pages = common::fixture().join("pages");
    let out = ctx.out.path().to_path_buf();
    let second = golden_run(GOLDEN_QUERY, &out, "repeat", &pages, &[]);
    ensure(second.status.success(), || common::stderr(&second))?;
    let sequential = golden_run(GOLDEN_QUERY, &out, "sequential", &pages, &["--sequential"]);
    ensure(sequential.status.success(), || common::stderr(&sequential))?;

    let repeat_diff = differing_artifacts(&first, &run_dir(&out, "repeat"));
    ensure(repeat_diff.is_empty(), || format!("repeat run differs in {repeat_diff:?}"))?;
    let seq_diff = differing_artifacts(&first, &run_dir(&out, "sequential"));
    ensure(seq_diff.is_empty(), || format!("sequential run differs in {seq_diff:?}"))?;
    Ok(format!(
        "{} artifacts byte-identical across two concurrent runs and one sequential run",
        common::DETERMINISTIC_ARTIFACTS.len()
    ))
}

pub fn criterion_7(ctx: &mut Ctx) -> Verdict {
    let (dir, _) = ctx.golden()?;
    let text = fs::read_to_string(dir.join("ledger.jsonl")).map_err(|e| e.to_string())?;
    let mut by_agent: BTreeMap<String, usize> = BTreeMap::new();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        *by_agent.entry(v["agent"].as_str().unwrap_or("?").to_string()).or_default() += 1;
    }
    let total: usize = by_agent.values().sum();
    ensure(total <= LEDGER_BUDGET, || format!("{total} invocations"))?;
    ensure(total == EXPECTED_INVOCATIONS, || format!("{total} invocations, expected {EXPECTED_INVOCATIONS}: {by_agent:?}"))?;
    Ok(format!("{total} invocations (<= {LEDGER_BUDGET}): {by_agent:?}"))
}
