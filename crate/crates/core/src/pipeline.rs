//! Run driver: executes parse+collect, then sentiment and topic analysis in
//! parallel, then the report, with every handoff going through files in the
//! run directory. A manifest records stage status so an interrupted run can
//! be resumed without redoing finished stages.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batching::{AgentConfig, DEFAULT_BATCH_SIZE};
use crate::collector::{
    self, read_posts_csv, CollectDiagnostics, CollectError, CrawlerConfig, FixtureDirTransport,
    HttpTransport, PageTransport, PostRecord, COLLECTED_CSV,
};
use crate::coordinator::{parse_query, CoordinatorError, QuerySpec};
use crate::gateway::mock::MockScriptError;
use crate::gateway::openai::ConfigError;
use crate::gateway::{
    load_prompts, ChatBackend, CostLedger, Gateway, OpenAiBackend, OpenAiConfig, PromptError,
    PromptRole, PromptSet, RetryPolicy, ScriptedMock,
};
use crate::reporter::{self, generate_report, ReportPrompts, REPORT_JSON, REPORT_TXT};
use crate::sentiment::{self, run_sentiment, SentimentSummary, SENTIMENT_CSV};
use crate::topic::{
    self, aggregate_topics, run_topic_extraction, write_aggregation, AggregationMethod,
    AGGREGATED_CSV, MAPPING_CSV, TOPIC_CSV,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEDGER_FILE: &str = "ledger.jsonl";
/// Responses longer than this go to a ledger sidecar file.
pub const LEDGER_INLINE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "a0_coordinator")]
    Coordinator,
    #[serde(rename = "a1_sentiment")]
    Sentiment,
    #[serde(rename = "a2_topic")]
    Topic,
    #[serde(rename = "a3_report")]
    Report,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Coordinator, Stage::Sentiment, Stage::Topic, Stage::Report];

    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Coordinator => &[],
            Stage::Sentiment | Stage::Topic => &[Stage::Coordinator],
            Stage::Report => &[Stage::Sentiment, Stage::Topic],
        }
    }

    /// Artifact names this stage produces.
    pub fn artifacts(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Stage::Coordinator => &[("collected", COLLECTED_CSV)],
            Stage::Sentiment => &[("sentiment", SENTIMENT_CSV)],
            Stage::Topic => &[
                ("topic", TOPIC_CSV),
                ("aggregated", AGGREGATED_CSV),
                ("topic_mapping", MAPPING_CSV),
            ],
            Stage::Report => &[("report", REPORT_TXT), ("report_json", REPORT_JSON)],
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Stage::Coordinator => "a0_coordinator",
            Stage::Sentiment => "a1_sentiment",
            Stage::Topic => "a2_topic",
            Stage::Report => "a3_report",
        }
    }

    pub fn parse(raw: &str) -> Option<Stage> {
        let raw = raw.trim().to_ascii_lowercase();
        Stage::ALL
            .into_iter()
            .find(|s| s.id() == raw || s.id()[..2] == raw || s.id()[3..] == raw)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub error: Option<String>,
}

impl Default for StageRecord {
    fn default() -> Self {
        Self {
            status: StageStatus::Pending,
            started_at: None,
            finished_at: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    Live,
    Mock { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportChoice {
    Live { base_url: Option<String> },
    Fixture { dir: PathBuf },
}

/// Everything needed to rebuild the run environment on resume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub prompts_dir: PathBuf,
    pub backend: BackendChoice,
    pub transport: TransportChoice,
    pub batch_size: NonZeroUsize,
    pub agent_workers: usize,
    /// Run the sentiment and topic stages one after the other.
    pub sequential: bool,
}

impl RunConfig {
    pub fn new(prompts_dir: PathBuf, backend: BackendChoice, transport: TransportChoice) -> Self {
        Self {
            prompts_dir,
            backend,
            transport,
            batch_size: DEFAULT_BATCH_SIZE,
            agent_workers: AgentConfig::default().workers,
            sequential: false,
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            batch_size: self.batch_size,
            workers: self.agent_workers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub query: String,
    pub spec: Option<QuerySpec>,
    pub config: RunConfig,
    pub stages: BTreeMap<Stage, StageRecord>,
    /// Artifact name to file name inside the run directory.
    pub artifacts: BTreeMap<String, String>,
    pub ledger_path: String,
    pub collection: Option<CollectDiagnostics>,
    pub sentiment_summary: Option<SentimentSummary>,
    pub distinct_raw_topics: Option<usize>,
    pub aggregation_method: Option<AggregationMethod>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(run_id: &str, query: &str, config: RunConfig) -> Self {
        Self {
            run_id: run_id.into(),
            query: query.into(),
            spec: None,
            config,
            stages: Stage::ALL.iter().map(|s| (*s, StageRecord::default())).collect(),
            artifacts: BTreeMap::new(),
            ledger_path: LEDGER_FILE.into(),
            collection: None,
            sentiment_summary: None,
            distinct_raw_topics: None,
            aggregation_method: None,
            warnings: Vec::new(),
        }
    }

    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stages
            .get(&stage)
            .map(|r| r.status)
            .unwrap_or(StageStatus::Pending)
    }

    pub fn all_done(&self) -> bool {
        Stage::ALL.iter().all(|s| self.status(*s) == StageStatus::Done)
    }

    /// A stage may be running or done only when all its prerequisites are done.
    pub fn check_dag(&self) -> Result<(), String> {
        for stage in Stage::ALL {
            if matches!(self.status(stage), StageStatus::Running | StageStatus::Done) {
                if let Some(dep) = stage
                    .prerequisites()
                    .iter()
                    .find(|d| self.status(**d) != StageStatus::Done)
                {
                    return Err(format!("{stage} is {:?} while {dep} is not done", self.status(stage)));
                }
            }
        }
        Ok(())
    }

    pub fn transition(&mut self, stage: Stage, to: StageStatus) -> Result<(), PipelineError> {
        use StageStatus::*;
        let from = self.status(stage);
        let allowed = matches!(
            (from, to),
            (Pending, Running) | (Running, Done) | (Running, Failed) | (Failed, Pending) | (Running, Pending)
        );
        if !allowed {
            return Err(PipelineError::Internal(format!("{stage}: illegal transition {from:?} -> {to:?}")));
        }
        let record = self.stages.entry(stage).or_default();
        let previous = record.clone();
        record.status = to;
        match to {
            Running => {
                record.started_at = Some(Utc::now());
                record.finished_at = None;
                record.error = None;
            }
            Done | Failed => record.finished_at = Some(Utc::now()),
            Pending => {
                record.started_at = None;
                record.finished_at = None;
            }
        }
        if let Err(e) = self.check_dag() {
            *self.stages.get_mut(&stage).expect("present") = previous;
            return Err(PipelineError::Internal(e));
        }
        Ok(())
    }

    pub fn load(run_dir: &Path) -> Result<Self, PipelineError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::Manifest {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Manifest {
            path,
            reason: e.to_string(),
        })
    }

    /// Writes `manifest.json` atomically (temp file, then rename).
    pub fn save(&self, run_dir: &Path) -> Result<(), PipelineError> {
        let path = run_dir.join(MANIFEST_FILE);
        let tmp = run_dir.join(format!("{MANIFEST_FILE}.tmp"));
        let body = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(&tmp, body)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| PipelineError::Manifest {
                path,
                reason: e.to_string(),
            })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("run directory {0} already exists")]
    RunExists(PathBuf),
    #[error("integrity check failed for {path}: {reason}")]
    Integrity { path: PathBuf, reason: String },
    #[error("run {0} has no finished stage to resume from; start a new run instead")]
    NothingToResume(String),
    #[error("query could not be handled: {0}")]
    Coordinator(#[from] CoordinatorError),
    #[error("collection failed: {0}")]
    Collection(#[from] CollectError),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("report failed: {0}")]
    Report(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Coordinator(CoordinatorError::Gateway(_)) => 1,
            PipelineError::Coordinator(_) => 2,
            PipelineError::Collection(_) => 3,
            PipelineError::Analysis(_) => 4,
            PipelineError::Report(_) => 5,
            _ => 1,
        }
    }
}

impl From<PromptError> for PipelineError {
    fn from(e: PromptError) -> Self {
        PipelineError::Setup(e.to_string())
    }
}

impl From<MockScriptError> for PipelineError {
    fn from(e: MockScriptError) -> Self {
        PipelineError::Setup(e.to_string())
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Setup(e.to_string())
    }
}

/// Live collaborators for a run.
pub struct PipelineEnv {
    pub prompts: PromptSet,
    pub backend: Arc<dyn ChatBackend>,
    pub retry: RetryPolicy,
    pub transport: Arc<dyn PageTransport>,
    pub crawler: CrawlerConfig,
}

impl PipelineEnv {
    pub fn from_config(config: &RunConfig) -> Result<Self, PipelineError> {
        let prompts = load_prompts(&config.prompts_dir)?;
        let (backend, retry): (Arc<dyn ChatBackend>, RetryPolicy) = match &config.backend {
            BackendChoice::Mock { dir } => {
                (Arc::new(ScriptedMock::from_dir(dir)?), RetryPolicy::immediate())
            }
            BackendChoice::Live => (
                Arc::new(OpenAiBackend::new(OpenAiConfig::from_env()?)),
                RetryPolicy::live(),
            ),
        };
        let (transport, crawler): (Arc<dyn PageTransport>, CrawlerConfig) = match &config.transport {
            // a missing directory surfaces as a collection failure, so a run
            // past collection can resume without its pages
            TransportChoice::Fixture { dir } => {
                (Arc::new(FixtureDirTransport::new(dir.clone())), CrawlerConfig::fixture())
            }
            TransportChoice::Live { base_url } => (
                Arc::new(HttpTransport::live(base_url.clone())),
                CrawlerConfig::live(),
            ),
        };
        Ok(Self {
            prompts,
            backend,
            retry,
            transport,
            crawler,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub run_id: Option<String>,
    /// Stop once this stage is done. With the sentiment or topic stage, only
    /// that one of the two parallel stages runs.
    pub stop_after: Option<Stage>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub report: Option<reporter::OpinionReport>,
    pub stopped_after: Option<Stage>,
}

/// Fresh run id: UTC timestamp plus a random suffix.
pub fn new_run_id() -> String {
    format!(
        "{}-{:06x}",
        Utc::now().format("%Y%m%dT%H%M%SZ"),
        rand::thread_rng().gen_range(0..0x100_0000u32)
    )
}

pub fn validate_run_id(id: &str) -> Result<(), PipelineError> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Setup(format!("invalid run id {id:?}")))
    }
}

/// `<out_root>/runs/<run_id>`
pub fn run_dir(out_root: &Path, run_id: &str) -> PathBuf {
    out_root.join("runs").join(run_id)
}

/// Starts a new run in `<out_root>/runs/<run_id>`.
pub fn run_pipeline(
    out_root: &Path,
    query: &str,
    config: RunConfig,
    env: &PipelineEnv,
    options: &RunOptions,
) -> Result<PipelineOutcome, PipelineError> {
    let run_id = options.run_id.clone().unwrap_or_else(new_run_id);
    validate_run_id(&run_id)?;
    let dir = run_dir(out_root, &run_id);
    if dir.exists() {
        return Err(PipelineError::RunExists(dir));
    }
    fs::create_dir_all(&dir).map_err(|e| PipelineError::Setup(format!("{}: {e}", dir.display())))?;
    let manifest = RunManifest::new(&run_id, query, config);
    manifest.save(&dir)?;
    tracing::info!(%run_id, dir = %dir.display(), "run started");
    Runner::new(dir, manifest, env)?.execute(options.stop_after)
}

/// Re-executes the stages of an existing run that are not done.
pub fn resume(run_dir: &Path, env: &PipelineEnv, stop_after: Option<Stage>) -> Result<PipelineOutcome, PipelineError> {
    let mut manifest = RunManifest::load(run_dir)?;
    verify_artifacts(run_dir, &manifest)?;
    if manifest.all_done() {
        tracing::info!(run_id = %manifest.run_id, "run already complete; nothing to do");
        let report = read_report_json(run_dir).ok();
        return Ok(PipelineOutcome {
            run_dir: run_dir.to_path_buf(),
            manifest,
            report,
            stopped_after: None,
        });
    }
    if !Stage::ALL.iter().any(|s| manifest.status(*s) == StageStatus::Done) {
        return Err(PipelineError::NothingToResume(manifest.run_id));
    }
    for stage in Stage::ALL {
        if matches!(manifest.status(stage), StageStatus::Running | StageStatus::Failed) {
            manifest.transition(stage, StageStatus::Pending)?;
        }
    }
    manifest.save(run_dir)?;
    tracing::info!(run_id = %manifest.run_id, "resuming run");
    Runner::new(run_dir.to_path_buf(), manifest, env)?.execute(stop_after)
}

fn read_report_json(run_dir: &Path) -> Result<reporter::OpinionReport, String> {
    let text = fs::read_to_string(run_dir.join(REPORT_JSON)).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

/// Checks that every artifact of a done stage exists and has a valid schema.
pub fn verify_artifacts(run_dir: &Path, manifest: &RunManifest) -> Result<(), PipelineError> {
    manifest.check_dag().map_err(|reason| PipelineError::Integrity {
        path: run_dir.join(MANIFEST_FILE),
        reason,
    })?;
    for stage in Stage::ALL {
        if manifest.status(stage) != StageStatus::Done {
            continue;
        }
        for (name, default_file) in stage.artifacts() {
            let file = manifest
                .artifacts
                .get(*name)
                .map(String::as_str)
                .unwrap_or(default_file);
            let path = run_dir.join(file);
            let integrity = |reason: String| PipelineError::Integrity {
                path: path.clone(),
                reason,
            };
            if !path.is_file() {
                return Err(integrity("missing artifact".into()));
            }
            let check = match *name {
                "collected" => read_posts_csv(&path).map(drop),
                "sentiment" => sentiment::read_sentiment_csv(&path).map(drop),
                "topic" => topic::read_topic_csv(&path).map(drop),
                "topic_mapping" => topic::read_mapping_csv(&path).map(drop),
                "aggregated" => topic::read_aggregated_csv(&path, &BTreeMap::new()).map(drop),
                _ => Ok(()),
            };
            check.map_err(|e| integrity(e.to_string()))?;
        }
    }
    if manifest.status(Stage::Coordinator) == StageStatus::Done && manifest.spec.is_none() {
        return Err(PipelineError::Integrity {
            path: run_dir.join(MANIFEST_FILE),
            reason: "coordinator stage is done but no query spec was recorded".into(),
        });
    }
    Ok(())
}

struct Runner<'a> {
    dir: PathBuf,
    manifest: Mutex<RunManifest>,
    env: &'a PipelineEnv,
    gateway: Gateway,
}

impl<'a> Runner<'a> {
    fn new(dir: PathBuf, manifest: RunManifest, env: &'a PipelineEnv) -> Result<Self, PipelineError> {
        let ledger = Arc::new(CostLedger::default());
        let ledger_path = dir.join(&manifest.ledger_path);
        ledger
            .attach_jsonl(&ledger_path, LEDGER_INLINE_LIMIT)
            .map_err(|e| PipelineError::Setup(format!("{}: {e}", ledger_path.display())))?;
        let gateway = Gateway::new(Arc::clone(&env.backend), ledger).with_retry(env.retry);
        Ok(Self {
            dir,
            manifest: Mutex::new(manifest),
            env,
            gateway,
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn update<T>(&self, f: impl FnOnce(&mut RunManifest) -> T) -> Result<T, PipelineError> {
        let mut m = self.manifest.lock().unwrap();
        let out = f(&mut m);
        m.save(&self.dir)?;
        Ok(out)
    }

    fn begin(&self, stage: Stage) -> Result<(), PipelineError> {
        tracing::info!(%stage, "stage started");
        self.update(|m| m.transition(stage, StageStatus::Running))?
    }

    fn finish<T>(&self, stage: Stage, result: Result<T, PipelineError>) -> Result<T, PipelineError> {
        match result {
            Ok(v) => {
                self.update(|m| {
                    for (name, file) in stage.artifacts() {
                        m.artifacts.insert(name.to_string(), file.to_string());
                    }
                    m.transition(stage, StageStatus::Done)
                })??;
                tracing::info!(%stage, "stage done");
                Ok(v)
            }
            Err(e) => {
                tracing::error!(%stage, error = %e, "stage failed");
                let msg = e.to_string();
                self.update(|m| {
                    let r = m.transition(stage, StageStatus::Failed);
                    if let Some(rec) = m.stages.get_mut(&stage) {
                        rec.error = Some(msg);
                    }
                    r
                })??;
                Err(e)
            }
        }
    }

    fn pending(&self, stage: Stage) -> bool {
        self.manifest.lock().unwrap().status(stage) != StageStatus::Done
    }

    fn into_outcome(self, stopped_after: Option<Stage>, report: Option<reporter::OpinionReport>) -> PipelineOutcome {
        PipelineOutcome {
            run_dir: self.dir,
            manifest: self.manifest.into_inner().unwrap(),
            report,
            stopped_after,
        }
    }

    fn execute(self, stop_after: Option<Stage>) -> Result<PipelineOutcome, PipelineError> {
        if self.pending(Stage::Coordinator) {
            self.begin(Stage::Coordinator)?;
            let r = self.coordinate();
            self.finish(Stage::Coordinator, r)?;
        }
        if stop_after == Some(Stage::Coordinator) {
            return Ok(self.into_outcome(stop_after, None));
        }

        let posts = read_posts_csv(&self.path(COLLECTED_CSV)).map_err(|e| PipelineError::Integrity {
            path: self.path(COLLECTED_CSV),
            reason: e.to_string(),
        })?;
        let run_a1 = self.pending(Stage::Sentiment) && stop_after != Some(Stage::Topic);
        let run_a2 = self.pending(Stage::Topic) && stop_after != Some(Stage::Sentiment);
        let sequential = self.manifest.lock().unwrap().config.sequential;

        let a1 = || -> Result<(), PipelineError> {
            self.begin(Stage::Sentiment)?;
            let r = self.analyze_sentiment(&posts);
            self.finish(Stage::Sentiment, r)
        };
        let a2 = || -> Result<(), PipelineError> {
            self.begin(Stage::Topic)?;
            let r = self.analyze_topics(&posts);
            self.finish(Stage::Topic, r)
        };
        let (r1, r2) = if sequential {
            (run_a1.then(a1), run_a2.then(a2))
        } else {
            thread::scope(|s| {
                let h1 = run_a1.then(|| s.spawn(a1));
                let h2 = run_a2.then(|| s.spawn(a2));
                (
                    h1.map(|h| h.join().expect("sentiment stage thread")),
                    h2.map(|h| h.join().expect("topic stage thread")),
                )
            })
        };
        let errors: Vec<PipelineError> = [r1, r2].into_iter().flatten().filter_map(Result::err).collect();
        if let Some(first) = errors.into_iter().next() {
            return Err(first);
        }
        if matches!(stop_after, Some(Stage::Sentiment | Stage::Topic)) {
            return Ok(self.into_outcome(stop_after, None));
        }

        let report = if self.pending(Stage::Report) {
            self.begin(Stage::Report)?;
            let r = self.report();
            Some(self.finish(Stage::Report, r)?)
        } else {
            read_report_json(&self.dir).ok()
        };
        Ok(self.into_outcome(None, report))
    }

    fn coordinate(&self) -> Result<(), PipelineError> {
        let query = self.manifest.lock().unwrap().query.clone();
        let prompt = self.env.prompts.core(PromptRole::Coordinator);
        let spec = parse_query(&query, prompt, &self.gateway)?;
        tracing::info!(spec = %spec.canonical_json(), "query parsed");
        self.update(|m| m.spec = Some(spec.clone()))?;
        let outcome = collector::collect(
            &spec,
            self.env.transport.as_ref(),
            &self.env.crawler,
            &self.path(COLLECTED_CSV),
        )?;
        self.update(|m| m.collection = Some(outcome.diagnostics))?;
        Ok(())
    }

    fn analyze_sentiment(&self, posts: &[PostRecord]) -> Result<(), PipelineError> {
        let config = self.manifest.lock().unwrap().config.agent_config();
        let outcome = run_sentiment(
            posts,
            self.env.prompts.core(PromptRole::Sentiment),
            &self.gateway,
            &config,
            &self.path(SENTIMENT_CSV),
        )
        .map_err(|e| PipelineError::Analysis(e.to_string()))?;
        self.update(|m| {
            m.sentiment_summary = Some(outcome.summary.clone());
            m.warnings.extend(outcome.warnings.iter().map(|w| format!("sentiment: {w}")));
        })
    }

    fn analyze_topics(&self, posts: &[PostRecord]) -> Result<(), PipelineError> {
        let config = self.manifest.lock().unwrap().config.agent_config();
        let analysis = |e: topic::TopicError| PipelineError::Analysis(e.to_string());
        let extracted = run_topic_extraction(
            posts,
            self.env.prompts.core(PromptRole::Topic),
            &self.gateway,
            &config,
            &self.path(TOPIC_CSV),
        )
        .map_err(analysis)?;
        let consolidator = self
            .env
            .prompts
            .get(PromptRole::TopicConsolidator)
            .map(|p| (p, &self.gateway));
        let aggregated = aggregate_topics(&extracted.records, consolidator).map_err(analysis)?;
        write_aggregation(&self.dir, &aggregated).map_err(analysis)?;
        self.update(|m| {
            m.distinct_raw_topics = Some(extracted.distinct_raw_topics);
            m.aggregation_method = Some(aggregated.method);
            m.warnings.extend(
                extracted
                    .warnings
                    .iter()
                    .chain(&aggregated.warnings)
                    .map(|w| format!("topic: {w}")),
            );
        })
    }

    fn report(&self) -> Result<reporter::OpinionReport, PipelineError> {
        let report_err = |what: &str, e: &dyn fmt::Display| PipelineError::Report(format!("{what}: {e}"));
        let sentiment = sentiment::read_sentiment_csv(&self.path(SENTIMENT_CSV))
            .map_err(|e| report_err(SENTIMENT_CSV, &e))?;
        let topics = topic::read_topic_csv(&self.path(TOPIC_CSV)).map_err(|e| report_err(TOPIC_CSV, &e))?;
        let mapping =
            topic::read_mapping_csv(&self.path(MAPPING_CSV)).map_err(|e| report_err(MAPPING_CSV, &e))?;
        let table = topic::read_aggregated_csv(&self.path(AGGREGATED_CSV), &mapping)
            .map_err(|e| report_err(AGGREGATED_CSV, &e))?;
        let (spec, surplus) = {
            let m = self.manifest.lock().unwrap();
            let surplus = m
                .sentiment_summary
                .as_ref()
                .map(|s| s.surplus.clone())
                .unwrap_or_default();
            (m.spec.clone(), surplus)
        };
        let payload = reporter::merge(&sentiment, &topics, &table, &mapping, &surplus)
            .map_err(|e| PipelineError::Report(e.to_string()))?;
        let prompts = ReportPrompts {
            sentiment_summarizer: self.env.prompts.core(PromptRole::ReportSentimentSummarizer),
            topic_summarizer: self.env.prompts.core(PromptRole::ReportTopicSummarizer),
            synthesizer: self.env.prompts.get(PromptRole::ReportSynthesizer),
        };
        let report = generate_report(&payload, &prompts, &self.gateway, spec.as_ref());
        reporter::write_report(&self.dir, &report).map_err(|e| PipelineError::Report(e.to_string()))?;
        self.update(|m| m.warnings.extend(report.warnings.iter().map(|w| format!("report: {w}"))))?;
        Ok(report)
    }
}
