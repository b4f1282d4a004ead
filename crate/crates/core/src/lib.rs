//! Relevance-ranking benchmark engine.
//!
//! Each dataset instance pairs one call-for-papers prompt with four candidate
//! papers, one per relevance category. The engine expands instances into
//! supervised prompt/paper pairs, vectorizes them, trains rank classifiers
//! under one-hot or thermometer label encodings, runs a cosine-similarity
//! threshold baseline, and scores everything with Kendall's tau, per-class
//! F1 and bootstrap standard errors.
//!
//! Module map:
//!
//! - [`corpus`]: data model, ingestion, pair expansion, splits and subsampling
//! - [`embedder`]: built-in hashing vectorizer, interchange embedding store, cosine
//! - [`encoding`]: one-hot / thermometer label codecs and their readouts
//! - [`models`]: kNN, SGD-trained linear heads, PCA, randomized search
//! - [`cosine_baseline`]: fixed-threshold similarity classifier and its grid search
//! - [`metrics`]: Kendall's tau, per-class F1, bootstrap summaries
//! - [`runner`]: experiment configuration, end-to-end runs, learning curves, reports

pub mod corpus;
pub mod cosine_baseline;
pub mod embedder;
pub mod encoding;
pub mod metrics;
pub mod models;
pub mod runner;
pub mod seeds;

pub use corpus::{Category, Instance, PairGroup, PairRecord, RelevanceRank, SplitSpec};
pub use encoding::Codec;

/// Version string recorded in every run record.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
