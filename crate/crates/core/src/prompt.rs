//! Byte-level tokenization and k-shot sequence construction.
//!
//! Sequences follow one layout everywhere:
//!
//! ```text
//! [instruction?] x₁ y₁ sep x₂ y₂ sep … x_k y_k sep x [y EOS]
//! ```
//!
//! with the loss mask set to 1 exactly on response tokens (every context yᵢ,
//! the final y, and the terminating EOS) and 0 on instruction, queries,
//! suffixes, and separators.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One token per byte plus three reserved ids.
pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub const VOCAB_SIZE: usize = 259;

/// Byte-level encoding: token id = byte value for 0..=255.
pub fn tokenize(text: &str) -> Vec<u32> {
    text.bytes().map(u32::from).collect()
}

/// Inverse of [`tokenize`] on byte content; reserved ids are skipped, so a
/// greedy continuation ending in EOS detokenizes to its text alone.
pub fn detokenize(ids: &[u32]) -> String {
    let bytes: Vec<u8> = ids
        .iter()
        .filter(|&&id| id < 256)
        .map(|&id| id as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// A query/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub x: String,
    pub y: String,
}

impl Example {
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Self {
        let ex = Self {
            x: x.into(),
            y: y.into(),
        };
        debug_assert!(!ex.y.is_empty(), "response must be non-empty");
        ex
    }

    /// Stable content fingerprint, used by the leakage instrumentation.
    pub fn fingerprint(&self) -> u64 {
        let mut buf = Vec::with_capacity(self.x.len() + self.y.len() + 1);
        buf.extend_from_slice(self.x.as_bytes());
        buf.push(0x1f);
        buf.extend_from_slice(self.y.as_bytes());
        crate::rng::fnv1a(&buf)
    }
}

/// Literal strings wrapped around examples when a prompt is assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Template {
    /// Inserted between consecutive examples.
    pub separator: String,
    /// Appended to every query before its response.
    pub query_suffix: String,
    /// Optional prefix prepended verbatim to the whole sequence.
    pub instruction: Option<String>,
}

impl Default for Template {
    fn default() -> Self {
        Self {
            separator: "\n== Next Example ==\n".to_string(),
            query_suffix: String::new(),
            instruction: None,
        }
    }
}

impl Template {
    pub fn with_separator(mut self, sep: impl Into<String>) -> Self {
        self.separator = sep.into();
        self
    }

    pub fn with_query_suffix(mut self, suffix: impl Into<String>) -> Self {
        self.query_suffix = suffix.into();
        self
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = Some(instruction.into());
        self
    }
}

/// Token ids plus a parallel loss mask and layout bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSequence {
    pub tokens: Vec<u32>,
    /// 1 exactly on response tokens (and the final EOS).
    pub loss_mask: Vec<u8>,
    /// Number of context examples in front of the target.
    pub n_ctx: usize,
    /// Index of the first token of the final target response.
    pub target_start: usize,
}

impl PromptSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m != 0).count()
    }
}

struct SequenceBuilder {
    tokens: Vec<u32>,
    mask: Vec<u8>,
}

impl SequenceBuilder {
    fn new() -> Self {
        Self {
            tokens: Vec::new(),
            mask: Vec::new(),
        }
    }

    fn push_text(&mut self, text: &str, masked: bool) {
        let ids = tokenize(text);
        let m = u8::from(masked);
        self.mask.extend(std::iter::repeat(m).take(ids.len()));
        self.tokens.extend(ids);
    }

    fn push_eos_masked(&mut self) {
        self.tokens.push(EOS);
        self.mask.push(1);
    }
}

fn check_length(
    tokens: usize,
    max_len: usize,
    ctx_tokens: usize,
    target_tokens: usize,
) -> Result<()> {
    if tokens > max_len {
        return Err(Error::SequenceTooLong {
            total: tokens,
            max: max_len,
            ctx_tokens,
            target_tokens,
        });
    }
    Ok(())
}

/// Full training sequence: context examples, the target pair, and a trained
/// EOS terminator. Loss lands on every response.
pub fn build_training_sequence(
    ctx: &[Example],
    target: &Example,
    template: &Template,
    max_len: usize,
) -> Result<PromptSequence> {
    let mut b = SequenceBuilder::new();
    if let Some(instruction) = &template.instruction {
        b.push_text(instruction, false);
    }
    for ex in ctx {
        b.push_text(&ex.x, false);
        b.push_text(&template.query_suffix, false);
        b.push_text(&ex.y, true);
        b.push_text(&template.separator, false);
    }
    let ctx_tokens = b.tokens.len();
    b.push_text(&target.x, false);
    b.push_text(&template.query_suffix, false);
    let target_start = b.tokens.len();
    b.push_text(&target.y, true);
    b.push_eos_masked();
    let target_tokens = b.tokens.len() - ctx_tokens;
    check_length(b.tokens.len(), max_len, ctx_tokens, target_tokens)?;
    debug_assert_ne!(b.mask.first(), Some(&1), "first token cannot carry loss");
    Ok(PromptSequence {
        tokens: b.tokens,
        loss_mask: b.mask,
        n_ctx: ctx.len(),
        target_start,
    })
}

/// Evaluation prompt: same layout truncated right after the final query.
/// Always a strict token prefix of the corresponding training sequence.
pub fn build_eval_prompt(
    ctx: &[Example],
    x: &str,
    template: &Template,
    max_len: usize,
) -> Result<Vec<u32>> {
    let mut b = SequenceBuilder::new();
    if let Some(instruction) = &template.instruction {
        b.push_text(instruction, false);
    }
    for ex in ctx {
        b.push_text(&ex.x, false);
        b.push_text(&template.query_suffix, false);
        b.push_text(&ex.y, true);
        b.push_text(&template.separator, false);
    }
    let ctx_tokens = b.tokens.len();
    b.push_text(x, false);
    b.push_text(&template.query_suffix, false);
    let target_tokens = b.tokens.len() - ctx_tokens;
    check_length(b.tokens.len(), max_len, ctx_tokens, target_tokens)?;
    Ok(b.tokens)
}

/// Next-step scoring sequence: the evaluation prompt followed by the true
/// response and EOS, with loss on the final response only. This is the
/// sequence whose mean masked NLL is the next-step predictive loss of the
/// target given its context; with no context it coincides with
/// [`build_training_sequence`] on the bare pair.
pub fn build_scoring_sequence(
    ctx: &[Example],
    target: &Example,
    template: &Template,
    max_len: usize,
) -> Result<PromptSequence> {
    let mut b = SequenceBuilder::new();
    if let Some(instruction) = &template.instruction {
        b.push_text(instruction, false);
    }
    for ex in ctx {
        b.push_text(&ex.x, false);
        b.push_text(&template.query_suffix, false);
        b.push_text(&ex.y, false); // context responses unmasked here
        b.push_text(&template.separator, false);
    }
    let ctx_tokens = b.tokens.len();
    b.push_text(&target.x, false);
    b.push_text(&template.query_suffix, false);
    let target_start = b.tokens.len();
    b.push_text(&target.y, true);
    b.push_eos_masked();
    let target_tokens = b.tokens.len() - ctx_tokens;
    check_length(b.tokens.len(), max_len, ctx_tokens, target_tokens)?;
    Ok(PromptSequence {
        tokens: b.tokens,
        loss_mask: b.mask,
        n_ctx: ctx.len(),
        target_start,
    })
}
