//! Complementary-item recommendation with Gaussian item embeddings.
//!
//! The pipeline: ingest transaction logs ([`corpus`]), sample windowed
//! co-purchase pairs and aggregate their frequencies, train item Gaussian
//! embeddings with a margin loss over the log expected likelihood
//! ([`trainer`]), generate trustworthy evaluation labels with a chi-squared
//! independence test ([`labelgen`]), and score rankings with HR@K / NDCG@K
//! against those labels ([`evaluator`]). [`synth`] generates corpora with
//! planted complements for testing.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluator;
pub mod kv;
pub mod labelgen;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
