//! Speaker-aware masked transformer for emotion recognition in
//! conversation.
//!
//! A conversation is encoded utterance-by-utterance (trainable
//! bag-of-words hashing or precomputed vectors), then run through three
//! independent transformer stacks whose attention is restricted by
//! speaker-derived masks (conventional / intra-speaker / inter-speaker).
//! The stack outputs are fused (add, concatenation, or attention) and
//! classified per utterance. Everything runs on a small built-in f64
//! autodiff core, trained with AdamW under a warmup/linear-decay
//! schedule.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod masks;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod probe;
pub mod tensor;
pub mod trainer;
pub mod transformer;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
