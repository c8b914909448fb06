//! Automated public-opinion analysis over social-media posts.
//!
//! One natural-language query drives the whole run: the coordinator turns it
//! into a [`coordinator::QuerySpec`], the collector crawls matching posts,
//! the sentiment and topic agents label them in parallel, and the reporter
//! assembles a four-section report from exact statistics plus LLM narrative.

pub mod collector;
pub mod coordinator;
pub mod gateway;
pub mod batching;
pub mod sentiment;
pub mod topic;
pub mod reporter;
pub mod pipeline;
