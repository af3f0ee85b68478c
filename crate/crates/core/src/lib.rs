//! Multi-label multimodal classification: temporal-pooling encoders, a
//! log-mel audio pipeline, a metadata random forest, softmax modal-attention
//! score fusion, and average-precision evaluation.

pub mod audio;
pub mod cli;
pub mod data;
pub mod encoders;
pub mod error;
pub mod forest;
pub mod fusion;
pub mod metrics;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{xavier_init, Parameter, Tensor};
