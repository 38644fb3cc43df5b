//! Sentiment- and information-aware review subset selection for opinion
//! summarization, with a two-stage trained summarizer.
//!
//! The crate is organized as a pipeline: [`corpus`] loading and synthesis,
//! [`sentiment`] tagging, [`valuation`] scoring of review informativeness,
//! [`sampling`] of review subsets, the [`summodel`] summarizer, the
//! [`pipeline`] that trains and runs it, and [`eval`] for metric tables.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod ranking;
pub mod rouge;
pub mod sampling;
pub mod seed;
pub mod sentiment;
pub mod summodel;
pub mod valuation;
