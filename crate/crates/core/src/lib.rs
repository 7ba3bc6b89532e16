//! Emotion-aware video explanation toolkit.

pub mod cli;
pub mod config;
pub mod container;
pub mod dataset;
pub mod detect;
pub mod emotion;
pub mod error;
pub mod metrics;
pub mod prompt;
pub mod tensor;
pub mod vision;

pub use error::{Error, Result};
pub use tensor::Tensor;
