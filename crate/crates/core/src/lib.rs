//! Heterogeneous graphs as text: metapath corpora, cloze-style label
//! prediction with constrained vocabularies and a compact masked language
//! model trained from scratch.

pub mod corpus;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod metapath;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod synthetic;
pub mod text;
pub mod tokenizer;

pub use error::{Error, Result};
