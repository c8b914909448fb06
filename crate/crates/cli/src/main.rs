use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use opinionflow::pipeline::{
    self, BackendChoice, PipelineEnv, PipelineError, PipelineOutcome, RunConfig, RunManifest,
    RunOptions, Stage, TransportChoice,
};
use opinionflow::reporter::REPORT_TXT;

#[derive(Parser)]
#[command(name = "opinionflow", version, about = "Automated public-opinion analysis from a single query")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a natural-language query end to end.
    Run(RunArgs),
    /// Finish an interrupted run, reusing the artifacts it already produced.
    Resume(ResumeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Live,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportKind {
    Live,
    Fixture,
}

#[derive(clap::Args)]
struct RunArgs {
    /// The analysis request, e.g. "Analyze #Trade War# on Weibo for 2025.4.9".
    query: String,
    #[arg(long, default_value = "prompts")]
    prompts: PathBuf,
    #[arg(long, value_enum, default_value = "live")]
    backend: BackendKind,
    /// Script directory for the mock backend.
    #[arg(long)]
    mock_dir: Option<PathBuf>,
    #[arg(long, default_value = "10")]
    batch_size: NonZeroUsize,
    /// Output root; runs go to <out>/runs/<run_id>.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "live")]
    transport: TransportKind,
    /// Page fixture directory for the fixture transport.
    #[arg(long)]
    fixture_dir: Option<PathBuf>,
    /// Base URL for the live transport.
    #[arg(long)]
    search_url: Option<String>,
    #[arg(long)]
    run_id: Option<String>,
    /// Run sentiment and topic analysis one after the other.
    #[arg(long)]
    sequential: bool,
    /// Stop after a stage (a0, a1, a2 or a3); finish later with `resume`.
    #[arg(long, value_parser = parse_stage)]
    stop_after: Option<Stage>,
}

#[derive(clap::Args)]
struct ResumeArgs {
    run_id: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_parser = parse_stage)]
    stop_after: Option<Stage>,
}

fn parse_stage(raw: &str) -> Result<Stage, String> {
    Stage::parse(raw).ok_or_else(|| format!("unknown stage {raw:?}"))
}

/// Absolute form of a path so a resumed run works from any directory.
fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

fn run_config(args: &RunArgs) -> Result<RunConfig, PipelineError> {
    let backend = match args.backend {
        BackendKind::Live => BackendChoice::Live,
        BackendKind::Mock => BackendChoice::Mock {
            dir: absolute(args.mock_dir.as_deref().ok_or_else(|| {
                PipelineError::Setup("--backend mock requires --mock-dir".into())
            })?),
        },
    };
    let transport = match args.transport {
        TransportKind::Live => TransportChoice::Live {
            base_url: args.search_url.clone(),
        },
        TransportKind::Fixture => TransportChoice::Fixture {
            dir: absolute(args.fixture_dir.as_deref().ok_or_else(|| {
                PipelineError::Setup("--transport fixture requires --fixture-dir".into())
            })?),
        },
    };
    let mut config = RunConfig::new(absolute(&args.prompts), backend, transport);
    config.batch_size = args.batch_size;
    config.sequential = args.sequential;
    Ok(config)
}

fn run(args: RunArgs) -> Result<PipelineOutcome, PipelineError> {
    let config = run_config(&args)?;
    let env = PipelineEnv::from_config(&config)?;
    let options = RunOptions {
        run_id: args.run_id.clone(),
        stop_after: args.stop_after,
    };
    pipeline::run_pipeline(&args.out, &args.query, config, &env, &options)
}

fn resume(args: ResumeArgs) -> Result<PipelineOutcome, PipelineError> {
    pipeline::validate_run_id(&args.run_id)?;
    let dir = pipeline::run_dir(&args.out, &args.run_id);
    let manifest = RunManifest::load(&dir)?;
    let env = PipelineEnv::from_config(&manifest.config)?;
    pipeline::resume(&dir, &env, args.stop_after)
}

fn summarize(outcome: &PipelineOutcome) {
    let m = &outcome.manifest;
    println!("run_id: {}", m.run_id);
    println!("run_dir: {}", outcome.run_dir.display());
    for (stage, record) in &m.stages {
        println!("  {stage}: {:?}", record.status);
    }
    if let Some(stage) = outcome.stopped_after {
        println!("stopped after {stage}; continue with `opinionflow resume {}`", m.run_id);
    }
    if let Some(report) = &outcome.report {
        let stats = &report.statistics;
        println!("posts: {}", stats.total_posts);
        for s in &stats.sentiment {
            println!("  {}: {} ({}%)", s.label, s.count, s.percent);
        }
        println!("canonical topics: {}", stats.topics.len());
        println!("report: {}", outcome.run_dir.join(REPORT_TXT).display());
    }
    for w in &m.warnings {
        println!("warning: {w}");
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Resume(args) => resume(args),
    };
    match result {
        Ok(outcome) => {
            summarize(&outcome);
            ExitCode::SUCCESS
        }
        Err(e) => {
            tracing::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
