//! Text classifiers with memory-budgeted word embeddings.
//!
//! Word types are hard-clustered end to end: during training each word keeps a
//! vector of cluster scores that is relaxed with Gumbel-Softmax; at deployment
//! the scores collapse to one ⌈log₂ k⌉-bit pointer per word. The crate covers
//! the whole path from raw corpora to a bit-packed model file:
//!
//! - [`tensor_core`]: tensors, reverse-mode tape, Adam, seeded RNG.
//! - [`data`]: tokenizers, vocabulary, dataset loading and splitting.
//! - [`embed`]: standard, cluster, cluster-adjustment, mixture and
//!   compositional-coding embedders.
//! - [`seq`]: LSTM and simple RNN encoders plus the softmax head.
//! - [`train`]: training loop, evaluation, sweeps.
//! - [`deploy`]: size accounting, compact model, binary format, inference.
//! - [`analysis`]: cluster dumps, hidden-state export, area ratio, curves.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod deploy;
pub mod embed;
pub mod error;
pub mod model;
pub mod seq;
pub mod tensor_core;
pub mod train;

pub use data::{EncodedDataset, RawDataset, TokenizerKind, Vocab};
pub use deploy::{CompactModel, SizeReport};
pub use embed::{EmbedMode, Embedder};
pub use error::{Error, Result};
pub use model::{Classifier, ModelConfig};
pub use train::{SweepRecord, TrainConfig, TrainResult};
