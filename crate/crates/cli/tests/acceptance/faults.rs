//! Fault scenarios layered on a copy of the golden mock script.

use std::fs;
use std::path::{Path, PathBuf};

use opinionflow::batching::batch_user_text;
use opinionflow::collector::read_posts_csv;
use opinionflow::gateway::json::repair_message;
use opinionflow::gateway::{message_digest, Fault, MockScriptWriter};
use opinionflow::reporter::{synthesis_request, OpinionReport, CONCLUSIONS, GENERATION_FAILED, SENTIMENT_OVERVIEW, SENTIMENT_TOPIC_INSIGHTS, TOPIC_DISTRIBUTION};
use opinionflow::sentiment::{read_sentiment_csv, SentimentLabel, SENTIMENT_TASK};
use opinionflow::topic::TOPIC_TASK;
use serde_json::Value;

use crate::common::{self, copy_dir, differing_artifacts, run_dir, scripted_run, stage_status, GOLDEN_QUERY};
use crate::{Ctx, Verdict};

const MALFORMED: &str = "Sure! Here is my analysis of the posts: mostly negative.";

struct Scenario<'a> {
    ctx_out: &'a Path,
    golden: &'a Path,
    texts: &'a [String],
}

impl Scenario<'_> {
    fn batch(&self, task: &str, n: usize) -> String {
        let start = (n - 1) * 10;
        let end = (start + 10).min(self.texts.len());
        batch_user_text(task, n, &self.texts[start..end])
    }

    fn scripted(&self, user_text: &str) -> Result<String, String> {
        let path = common::fixture()
            .join("mock/responses")
            .join(format!("{}.txt", message_digest(user_text)));
        fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Copies the golden mock, lets `edit` add faults and replies, and runs
    /// the pipeline against it. Returns exit code and run directory.
    fn run(&self, name: &str, edit: impl FnOnce(&mut MockScriptWriter)) -> Result<(i32, PathBuf), String> {
        let mock = self.ctx_out.join(format!("mock-{name}"));
        copy_dir(&common::fixture().join("mock"), &mock);
        let mut writer = MockScriptWriter::create(&mock).map_err(|e| e.to_string())?;
        edit(&mut writer);
        writer.finish().map_err(|e| e.to_string())?;
        let output = scripted_run(GOLDEN_QUERY, self.ctx_out, name, &mock, &common::fixture().join("pages"), &[]);
        let code = output.status.code().ok_or("killed by a signal")?;
        Ok((code, run_dir(self.ctx_out, name)))
    }

    fn expect_identical(&self, name: &str, dir: &Path) -> Result<(), String> {
        let diff = differing_artifacts(self.golden, dir);
        if diff.is_empty() {
            Ok(())
        } else {
            Err(format!("{name}: artifacts differ from the golden run: {diff:?}"))
        }
    }
}

fn ledger_count(dir: &Path, agent: Option<&str>) -> Result<usize, String> {
    let text = fs::read_to_string(dir.join("ledger.jsonl")).map_err(|e| e.to_string())?;
    let mut n = 0;
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if agent.is_none_or(|a| v["agent"] == a) {
            n += 1;
        }
    }
    Ok(n)
}

fn manifest(dir: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(dir.join("manifest.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn expect(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn expect_failure(name: &str, got: (i32, PathBuf), code: i32, stage: &str) -> Result<(), String> {
    let (exit, dir) = got;
    expect(exit == code, || format!("{name}: exit {exit}, expected {code}"))?;
    let m = manifest(&dir)?;
    let status = stage_status(&m, stage);
    expect(status == "failed", || format!("{name}: {stage} is {status:?}, expected failed"))
}

pub fn criterion_8(ctx: &mut Ctx) -> Verdict {
    let (golden, _) = ctx.golden()?;
    let out = ctx.out.path().to_path_buf();
    let texts: Vec<String> = read_posts_csv(&golden.join("Collected_data.csv"))
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| p.text)
        .collect();
    let s = Scenario {
        ctx_out: &out,
        golden: &golden,
        texts: &texts,
    };
    let golden_total = ledger_count(&golden, None)?;
    let golden_sentiment = ledger_count(&golden, Some("sentiment"))?;
    let mut passed = Vec::new();

    // unparseable reply, repaired by the re-prompt
    let batch1 = s.batch(SENTIMENT_TASK, 1);
    let reply1 = s.scripted(&batch1)?;
    let got = s.run("malformed-once", |w| {
        w.fault(&batch1, [Fault::Respond(MALFORMED.into())]);
        w.respond(&repair_message(&batch1), &reply1).unwrap();
    })?;
    expect(got.0 == 0, || format!("malformed-once: exit {}", got.0))?;
    s.expect_identical("malformed-once", &got.1)?;
    let n = ledger_count(&got.1, Some("sentiment"))?;
    expect(n == golden_sentiment + 1, || format!("malformed-once: {n} sentiment calls, expected {}", golden_sentiment + 1))?;
    passed.push(format!("malformed once -> repaired, identical output, {n} sentiment calls"));

    // unparseable reply and an unusable repair
    let got = s.run("malformed-twice", |w| w.fault(&batch1, [Fault::Respond(MALFORMED.into())]))?;
    expect_failure("malformed-twice", got, 4, "a1_sentiment")?;
    passed.push("malformed twice -> exit 4, A1 failed".into());

    // too few labels once, then the scripted reply on retry
    let batch2 = s.batch(SENTIMENT_TASK, 2);
    let golden_rows = read_sentiment_csv(&golden.join("Sentiment_analysis_result.csv")).map_err(|e| e.to_string())?;
    let nine: Vec<&str> = golden_rows[10..19].iter().map(|r| r.sentiment.as_str()).collect();
    let short = serde_json::to_string(&nine).unwrap();
    let got = s.run("short-once", |w| w.fault(&batch2, [Fault::Respond(short.clone())]))?;
    expect(got.0 == 0, || format!("short-once: exit {}", got.0))?;
    s.expect_identical("short-once", &got.1)?;
    passed.push("short reply once -> retried, identical output".into());

    // too few labels twice: the last post of the batch is left unlabeled
    let got = s.run("short-twice", |w| {
        w.fault(&batch2, [Fault::Respond(short.clone()), Fault::Respond(short.clone())])
    })?;
    expect(got.0 == 0, || format!("short-twice: exit {}", got.0))?;
    let rows = read_sentiment_csv(&got.1.join("Sentiment_analysis_result.csv")).map_err(|e| e.to_string())?;
    expect(rows.len() == golden_rows.len(), || format!("short-twice: {} rows", rows.len()))?;
    for (i, (a, b)) in rows.iter().zip(&golden_rows).enumerate() {
        let want = if i == 19 { SentimentLabel::UNLABELED } else { b.sentiment.as_str() };
        expect(a.sentiment.as_str() == want && a.post_text == b.post_text, || {
            format!("short-twice: row {} is {:?}, expected {want:?}", i + 1, a.sentiment.as_str())
        })?;
    }
    passed.push("short reply twice -> row 20 unlabeled, exit 0".into());

    // transient rate limits are absorbed by gateway retries
    let topic3 = s.batch(TOPIC_TASK, 3);
    let got = s.run("rate-limit-transient", |w| w.fault(&topic3, [Fault::RateLimit, Fault::RateLimit]))?;
    expect(got.0 == 0, || format!("rate-limit-transient: exit {}", got.0))?;
    s.expect_identical("rate-limit-transient", &got.1)?;
    let n = ledger_count(&got.1, None)?;
    expect(n == golden_total + 2, || format!("rate-limit-transient: {n} ledger entries, expected {}", golden_total + 2))?;
    passed.push(format!("2 rate limits -> identical output, {n} ledger entries"));

    let got = s.run("rate-limit-persistent", |w| w.fault(&topic3, [Fault::RateLimit, Fault::RateLimit, Fault::RateLimit]))?;
    expect_failure("rate-limit-persistent", got, 4, "a2_topic")?;
    passed.push("3 rate limits on a topic batch -> exit 4, A2 failed".into());

    let got = s.run("coordinator-down", |w| w.fault(GOLDEN_QUERY, [Fault::Transport, Fault::Transport, Fault::Transport]))?;
    expect_failure("coordinator-down", got, 1, "a0_coordinator")?;
    passed.push("coordinator unreachable -> exit 1".into());

    // the synthesis call fails: its two sections degrade, the run still finishes
    let report: OpinionReport = serde_json::from_str(
        &fs::read_to_string(golden.join("report.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let body = |t: &str| report.section(t).map(|s| s.body.clone()).unwrap_or_default();
    let synthesis = synthesis_request(
        &report.statistics,
        report.query.as_ref(),
        &body(SENTIMENT_OVERVIEW),
        &body(TOPIC_DISTRIBUTION),
    );
    s.scripted(&synthesis)?;
    let got = s.run("synthesis-down", |w| w.fault(&synthesis, [Fault::RateLimit, Fault::RateLimit, Fault::RateLimit]))?;
    expect(got.0 == 0, || format!("synthesis-down: exit {}", got.0))?;
    let degraded: OpinionReport = serde_json::from_str(
        &fs::read_to_string(got.1.join("report.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    for title in [SENTIMENT_TOPIC_INSIGHTS, CONCLUSIONS] {
        let section = degraded.section(title).ok_or_else(|| format!("synthesis-down: no {title}"))?;
        expect(section.body == GENERATION_FAILED && !section.generated, || format!("synthesis-down: {title} was generated"))?;
    }
    for title in [SENTIMENT_OVERVIEW, TOPIC_DISTRIBUTION] {
        let section = degraded.section(title).ok_or_else(|| format!("synthesis-down: no {title}"))?;
        expect(section.generated && section.body == body(title), || format!("synthesis-down: {title} changed"))?;
    }
    passed.push("synthesis unavailable -> exit 0, two sections marked generation failed".into());

    Ok(passed.join("; "))
}
