//! Decoder-only transformer policy: training, sampling and checkpoints.

mod checkpoint;
mod infer;
mod layout;
mod model;
mod scalar;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{AdamState, Checkpoint, CHECKPOINT_MAGIC};
pub use infer::{
    greedy_token, sample_plans, sample_sequences, sample_token, softmax_with_temperature, Candidate, SampleFailure,
    SampledSeq,
};
pub use layout::{Layout, TensorSpec};
pub use model::Model;
pub use scalar::Scalar;
pub use train::{mean_loss, train, TrainLog, TrainOutcome, TrainSchedule};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds the context of {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("token id {0} is outside the vocabulary")]
    TokenOutOfRange(u32),
    #[error("no positions contribute to the loss")]
    NoTargets,
    #[error("loss became non-finite")]
    NonFinite,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid sampler config: {0}")]
    InvalidSampler(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tokenizer(#[from] crate::tokenizer::TokenizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub ff_dim: usize,
    pub context_length: usize,
    pub dropout: f64,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// Default shape for a vocabulary of `vocab_size` tokens.
    pub fn with_vocab(vocab_size: usize) -> Self {
        ModelConfig {
            layers: 2,
            heads: 2,
            embed_dim: 64,
            ff_dim: 256,
            context_length: 512,
            dropout: 0.1,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.to_string()));
        if self.heads == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return bad("embed-dim must be a positive multiple of heads");
        }
        if self.ff_dim == 0 || self.context_length == 0 || self.vocab_size == 0 {
            return bad("ff-dim, context-length and vocab-size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SamplerConfig {
    pub temperature: f64,
    /// Pick the most likely token instead of sampling; ties go to the
    /// lowest id.
    #[serde(default)]
    pub greedy: bool,
    pub max_new_tokens: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(temperature: f64, seed: u64) -> Self {
        SamplerConfig {
            temperature,
            greedy: false,
            max_new_tokens: 256,
            batch_size: 8,
            seed,
        }
    }

    pub fn greedy(seed: u64) -> Self {
        SamplerConfig {
            greedy: true,
            ..SamplerConfig::new(1.0, seed)
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(PolicyError::InvalidSampler("temperature must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(PolicyError::InvalidSampler("batch size must be positive".into()));
        }
        Ok(())
    }
}
