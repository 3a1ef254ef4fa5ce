//! Tokenizer, tiny decoder-only transformer, tape-based differentiation,
//! sampling, supervised fine-tuning and perplexity.

mod batch;
mod checkpoint;
pub mod gradcheck;
pub mod graph;
mod optim;
mod params;
mod sample;
mod sft;
pub mod tensor;
mod tokenizer;
pub mod transformer;

pub use batch::accumulate;
pub use checkpoint::{Checkpoint, Role, FORMAT_VERSION};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Grads, ParamStore};
pub use sample::{argmax, sample, sample_with_rng, truncated_distribution, SampleConfig};
pub use sft::{
    batch_loss_grads, completion_perplexity, encode_completion, encode_prompt, encode_record, example_nll_grads,
    mean_completion_nll, perplexity, perplexity_from_nll, sft_train, sft_train_examples, LossRow, SftConfig,
    SftExample,
};
pub use tensor::Tensor;
pub use tokenizer::{Tokenizer, BOS, EOS, PAD};
pub use transformer::{Bound, InitOptions, ModelConfig};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("sequence of length {len} exceeds context {context}")]
    Length { len: usize, context: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("token id {0} outside the vocabulary")]
    TokenOutOfRange(usize),
    #[error("character {0:?} is not in the tokenizer alphabet")]
    UnsupportedChar(char),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("non-finite values in tensor `{0}`")]
    NonFinite(String),
    #[error("training diverged at step {step}: {what} is not finite")]
    Diverged { step: usize, what: String },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("i/o error on {0}: {1}")]
    Io(String, String),
}
