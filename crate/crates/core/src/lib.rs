//! Recurrent memory language model.
//!
//! An LSTM language model augmented with a single-hop attention memory block
//! that attends over the most recent words of the current sentence. The crate
//! contains everything needed to train and inspect such models at desk scale:
//! a small reverse-mode differentiation core, the LSTM and memory-block
//! layers, model assembly, corpus handling, SGD training, perplexity
//! evaluation, attention analyses, and sentence-completion scoring.

pub mod analysis;
pub mod checkpoint;
pub mod completion;
pub mod config;
pub mod data;
pub mod error;
pub mod lstm;
pub mod memory;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod train;
pub mod util;

pub use error::{Result, RmnError};
pub use model::{AttentionTrace, LayerKind, MemoryDirection, ModelConfig, ModelStack, TraceRow};
pub use numeric::{ParamId, ParamRegistry, Tensor};
