//! Context-aware drug-jargon detection.
//!
//! The pipeline ingests an unlabeled forum corpus ([`corpus`]), labels it by
//! distant supervision from a small seed-term list ([`supervision`]), trains
//! a delexicalized context classifier ensembled with a word-attribute
//! classifier over frozen contextual embeddings ([`model`]), and extracts
//! corpus-level jargon lists ([`detect`]). [`evalkit`] holds metrics and the
//! embedding-similarity and masked-LM baselines.

pub mod checkpoint;
pub mod corpus;
pub mod detect;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod nn;
pub mod supervision;
pub mod synth;
pub mod tagger;
pub mod tokenizer;
pub mod util;
pub mod word2vec;

pub use error::{Error, Result};
