//! Codebook lifecycle engine for LLM-assisted deductive framing analysis.
//!
//! This crate is the pure, allocation-only half of `framelab`: it models news
//! corpora and versioned codebooks, renders classification / exploration /
//! curation prompts, validates the structured JSON verdicts a model returns,
//! mines disagreements and unstable cases, scores predictions against gold
//! labels and baselines, and folds the session event log into a [`session::SessionState`].
//!
//! Nothing here touches the filesystem, the network or a clock; timestamps
//! are supplied by the caller as RFC 3339 strings. The crate builds with
//! `default-features = false` for `no_std` targets that provide `alloc`.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod codebook;
pub mod corpus;
pub mod eval;
pub mod prompting;
pub mod session;
pub mod text;
pub mod verdict;

pub use codebook::{AggregationPolicy, Codebook, FrameDefinition, FrameQuestion, RevisionEntry};
pub use corpus::{Article, Corpus, SampleSpec};
pub use prompting::{PromptOptions, PromptText};
pub use verdict::{FrameVerdict, QuestionAnswer, VerdictRecord};
