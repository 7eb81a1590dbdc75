//! The guide in `book/` has no way to run its Rust snippets on its own, so
//! each chapter is pulled in here as a module doc and checked by
//! `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
#[doc = include_str!("../../../book/src/segmentation.md")]
pub mod segmentation {}
#[doc = include_str!("../../../book/src/expansion.md")]
pub mod expansion {}
#[doc = include_str!("../../../book/src/alignment.md")]
pub mod alignment {}
#[doc = include_str!("../../../book/src/expansion-scoring.md")]
pub mod expansion_scoring {}
#[doc = include_str!("../../../book/src/prompts.md")]
pub mod prompts {}
#[doc = include_str!("../../../book/src/coding-eval.md")]
pub mod coding_eval {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/benchmark.md")]
pub mod benchmark {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
