//! Fine-grained detection of machine-generated spans in human/LLM
//! co-authored text.
//!
//! The pipeline: [`synthesis`] builds co-authored corpora with exact span
//! labels, [`features`] turns documents into hashed sparse token features, a
//! two-label linear-chain [`crf`] tags tokens, [`granularity`] maps token
//! predictions up to words, sentences and whole documents, and
//! [`evaluation`] scores them. [`adversarial`] holds attack generators and the
//! homoglyph normaliser.

pub mod adversarial;
pub mod corpus;
pub mod crf;
pub mod evaluation;
pub mod exec;

pub mod features;
pub mod granularity;
pub mod pipeline;

pub mod synthesis;

pub use corpus::{AuthorSpan, CaseKind, Document, Label, UnitMode};
pub use crf::CrfModel;
pub use exec::Execution;
