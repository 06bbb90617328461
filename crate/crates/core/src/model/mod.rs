//! Encoder-decoder transformer over token ids: bidirectional encoder,
//! causal decoder with cross-attention, tied input/output embeddings,
//! learned positions, pre-layer-norm blocks and GELU feed-forward layers.
//! Gradients come from the reverse-mode tape in [`tape`].

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod infer;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use forward::{decode_step, decoder_logits, denoise_loss, embed, encode_seq, evaluate, BatchStats};
pub use infer::{greedy, sample, IncrementalDecoder};
pub use optim::{AdamSettings, AdamState};
pub use params::{Gradients, Layout, Params};
pub use scalar::Scalar;
pub use tensor::Matrix;
pub use train::{train, StepRecord, TrainLog, TrainSettings, Trainer};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds the maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} is outside the vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("target sequence of length {0} has nothing to predict")]
    TargetTooShort(usize),
    #[error("decoder prefix is empty")]
    EmptyPrefix,
    #[error("decoder prefix must start with <bos>")]
    MissingBos,
    #[error("sequence has no content tokens")]
    NoContent,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fresh parameters for `config`, deterministic in `seed`.
pub fn init_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Params<T>, ModelError> {
    Params::init(config, seed)
}
