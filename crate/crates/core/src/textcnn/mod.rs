//! Word-level convolutional text classifier.
//!
//! Token ids are embedded into an `L × D` matrix, convolved by one block of
//! `F` filters per n-gram width (3, 4 and 5 by default), passed through a
//! ReLU, max-pooled over time and concatenated into a pooled vector of
//! length `widths · F`, which a dense layer maps to class logits. The
//! forward pass keeps every intermediate activation, including the winning
//! window of each filter, because attribution needs them.

mod io;
mod model;
mod train;

pub use model::{
    BlockTrace, ConvBlock, ForwardTrace, Gradients, ModelConfig, ModelParams, Optimizer,
    Overrides, Prediction,
};
pub use train::{evaluate, train, EpochLog, Evaluation, TrainLog};

#[cfg(test)]
pub(crate) use model::tests::{random_model, tiny_config};
