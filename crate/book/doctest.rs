//! mdbook cannot run listings that depend on workspace crates, so every
//! chapter is compiled here as a module doc and checked by `cargo test --doc`.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/mining.md")]
pub mod mining {}
#[doc = include_str!("src/masking.md")]
pub mod masking {}
#[doc = include_str!("src/encoder.md")]
pub mod encoder {}
#[doc = include_str!("src/objectives.md")]
pub mod objectives {}
#[doc = include_str!("src/finetuning.md")]
pub mod finetuning {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("src/formats.md")]
pub mod formats {}
#[doc = include_str!("src/reproducibility.md")]
pub mod reproducibility {}
