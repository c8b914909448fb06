//! Deterministic generator for the tariff golden fixture.
//!
//! Writes crawler pages under `<out>/pages` and the scripted model under
//! `<out>/mock`. The pages are crawled with the real collector before the
//! script is written, so the scripted requests match what a run will send.

pub mod corpus;
pub mod pages;
pub mod script;

use std::fs;
use std::io;
use std::path::Path;

use opinionflow::collector::transport::FixtureDirTransport;
use opinionflow::collector::{crawl, CollectDiagnostics, CrawlerConfig};
use opinionflow::gateway::MockScriptWriter;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use script::{query_spec, QUERY_LONG, QUERY_SHORT, SURPLUS_BATCHES};

pub const DEFAULT_SEED: u64 = 20250409;

#[derive(Debug)]
pub struct Generated {
    pub posts: usize,
    pub pages: usize,
    pub responses: usize,
    pub diagnostics: CollectDiagnostics,
}

fn reset(dir: &Path) -> io::Result<()> {
    match fs::remove_dir_all(dir) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

pub fn generate(out: &Path, seed: u64) -> io::Result<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = corpus::build(&mut rng);

    let pages_dir = out.join("pages");
    let mock_dir = out.join("mock");
    reset(&pages_dir)?;
    reset(&mock_dir)?;
    let pages = pages::write_pages(&mut rng, &corpus.posts, &pages_dir)?;

    let crawled = crawl(
        &query_spec(),
        &FixtureDirTransport::new(&pages_dir),
        &CrawlerConfig::fixture(),
    )
    .map_err(io::Error::other)?;
    assert_eq!(crawled.posts.len(), corpus.posts.len(), "crawl lost or gained posts");
    for (got, want) in crawled.posts.iter().zip(&corpus.posts) {
        assert_eq!(
            (got.user_id.as_str(), got.text.as_str(), got.source_device.as_str()),
            (want.user_id.as_str(), want.text.as_str(), want.source_device.as_str()),
            "collected post differs from the generated one"
        );
        assert_eq!((got.reposts, got.comments, got.likes), (want.reposts, want.comments, want.likes));
        assert_eq!(got.timestamp.format("%H:%M").to_string(), format!("{:02}:{:02}", want.hour, want.minute));
    }

    let mut writer = MockScriptWriter::create(&mock_dir)?;
    let summary = script::write_script(&mut writer, &mut rng, &corpus, &corpus.posts)?;
    writer.finish()?;

    Ok(Generated {
        posts: corpus.posts.len(),
        pages,
        responses: summary.responses,
        diagnostics: crawled.diagnostics,
    })
}
