//! Sentiment-aware pre-training on a CPU.
//!
//! The pipeline mines a sentiment lexicon and aspect-sentiment pairs from raw
//! text ([`miner`]), masks the corpus toward that knowledge ([`masker`]),
//! pre-trains a small transformer ([`encoder`], [`objectives`]) and fine-tunes
//! it for sentence, aspect and opinion-role tasks ([`finetune`]).
//! [`pipeline`] wires the stages to files the way the `senti` binary runs them.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod finetune;
pub mod gradcheck;
pub mod masker;
pub mod miner;
pub mod objectives;
pub mod pipeline;
pub mod selftest;
pub mod synth;

pub use error::{Error, Result};
