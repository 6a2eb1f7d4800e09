//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("loss mask has no nonzero entries")]
    InvalidMask,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error(
        "sequence of {total} tokens exceeds max_seq_len {max} \
         (context: {ctx_tokens}, target: {target_tokens})"
    )]
    SequenceTooLong {
        total: usize,
        max: usize,
        ctx_tokens: usize,
        target_tokens: usize,
    },

    #[error("backward already ran on this graph")]
    BackwardAlreadyRan,

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("loss is detached: no tensor on the gradient path requires grad")]
    DetachedGraph,

    #[error("non-finite gradient for parameter `{name}` at optimizer step {step}")]
    NonFiniteGrad { name: String, step: u64 },

    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("LoRA rank {rank} too large for target `{target}` with min dimension {min_dim}")]
    RankTooLarge {
        rank: usize,
        target: String,
        min_dim: usize,
    },

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("task file {path}, line {line}: {msg}")]
    TaskFile {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("split does not fit: n_train {n_train} + n_test {n_test} > dataset size {len}")]
    SplitTooLarge {
        n_train: usize,
        n_test: usize,
        len: usize,
    },

    #[error("window {window} exceeds trace length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("information leakage: {0}")]
    Leakage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
