//! Multi-reference evaluation toolkit for natural language generation.
//!
//! The crate enriches single-reference benchmarks with LLM-diversified
//! references, scores hypotheses against the enlarged reference sets with
//! from-scratch lexical metrics (BLEU, ChrF, ROUGE-1/2/L, METEOR, CIDEr-D),
//! and meta-evaluates metrics against human judgments (Kendall tau-b,
//! Spearman, pairwise system accuracy, preference accuracy).

pub mod aggregation;
pub mod corpus;
pub mod diversifier;
pub mod diversity;
mod error;
pub mod external;
pub mod metaeval;
pub mod metrics;
pub mod pipeline;
pub mod text;

pub use error::{Error, Result};
