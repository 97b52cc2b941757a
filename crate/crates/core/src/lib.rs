//! Cross-lingual query retrieval over a monolingual knowledge base.
//!
//! The crate covers the whole offline loop: split a labeled knowledge base
//! into index and training halves, mine positive/negative pairs with
//! label-similarity weighted negative sampling, optionally add synthetic
//! groups from a text-generation backend, train a linear adapter over
//! frozen embeddings with InfoNCE, and score retrieval with Recall@k and
//! MRR.

pub mod ablation;
pub mod adapter;
pub mod bench;
pub mod embed;
pub mod error;
pub mod jsonl;
pub mod kb;
pub mod label_sim;
pub mod manifest;
pub mod miner;
pub mod pairs;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod sampling;
pub mod textgen;
pub mod train;

pub use error::{Error, Result};
