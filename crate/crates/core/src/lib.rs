//! Acronym-expansion augmentation and evaluation tooling for automated ICD coding.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus_io`] reads and writes notes, code sets, candidate lists, gold
//!   expansion annotations and score matrices.
//! * [`segmenter`] splits notes into header-delimited sections and applies the
//!   token budget.
//! * [`expander`] rewrites each section through a chat-completion endpoint (or an
//!   offline dictionary) to produce the acronym-expanded note.
//! * [`aligner`] recovers `(abbreviation, expansion)` pairs from an original and
//!   expanded text, and provides the edit distance.
//! * [`expansion_eval`] scores recovered pairs against gold annotations.
//! * [`prompts`] builds cloze prompts with one mask per code.
//! * [`coding_eval`] computes multi-label metrics, tunes decision thresholds and
//!   runs paired permutation tests.
//! * [`trainer`] is a small linear reference model trained with the paired
//!   cross-entropy plus symmetric-KL consistency objective.
//! * [`synthetic`] generates the synthetic acronym corpus used by the benchmark.

pub mod aligner;
pub mod coding_eval;
pub mod corpus_io;
mod error;
pub mod expander;
pub mod expansion_eval;
pub mod prompts;
pub mod seed;
pub mod segmenter;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
