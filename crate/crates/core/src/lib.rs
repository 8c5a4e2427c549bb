//! Function-level vulnerability risk rating for C-family code.
//!
//! Functions are extracted from a source tree, tokenized with byte-pair
//! encoding, embedded by averaging the hidden states of an LSTM language
//! model, extended with five lexical heuristics and scored by a soft
//! classifier trained on CVE labels rebalanced with SMOTE.

pub mod bpe;
pub mod classify;
pub mod corpus;
pub mod error;
pub mod features;
pub mod lm;
pub mod sampling;
pub mod similarity;
pub mod synth;

pub use bpe::{MergeTable, TokenSequence, Vocabulary};
pub use classify::{EvalReport, ModelSpec, TrainedModel};
pub use corpus::{CveLabelEntry, FunctionRecord};
pub use error::{Error, Result};
pub use features::{FeatureRow, TrimmedLexicon};
pub use lm::{FunctionEmbedding, LmConfig, LmParameters};
pub use sampling::LabeledDataset;
