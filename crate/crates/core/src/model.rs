//! Tiny decoder-only causal transformer with optional low-rank adapters.
//!
//! Pre-norm blocks with RMS norm, learned absolute positional embeddings,
//! multi-head causal attention, a GELU MLP, and an untied unembedding. All
//! weights are bias-free; 64-bit floats throughout. The forward pass records
//! onto a [`Tape`], so the same construction serves evaluation (no gradient
//! buffers) and training (exact reverse-mode gradients for the trainable
//! set).

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, TensorId};
use crate::prompt::PromptSequence;
use crate::rng::{tags, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size == 0 || self.n_layers == 0 || self.d_ff == 0 || self.max_seq_len == 0 {
            return Err(Error::Config("all model dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Which weight matrices receive low-rank adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoraTargets {
    pub kv: bool,
    pub mlp: bool,
}

impl Default for LoraTargets {
    fn default() -> Self {
        Self { kv: true, mlp: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    #[serde(default)]
    pub targets: LoraTargets,
    /// Multiplier on the adapter product; defaults to the α/r convention
    /// with α = 16.
    #[serde(default)]
    pub scaling: Option<f64>,
}

impl LoraConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            targets: LoraTargets::default(),
            scaling: None,
        }
    }

    pub fn effective_scaling(&self) -> f64 {
        self.scaling.unwrap_or(16.0 / self.rank as f64)
    }
}

/// Named parameter tensors plus the set that optimizers may touch.
#[derive(Debug, Clone)]
pub struct Parameters {
    pub config: ModelConfig,
    pub lora: Option<LoraConfig>,
    tensors: BTreeMap<String, Tensor>,
    trainable: BTreeSet<String>,
}

impl Parameters {
    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("no parameter named `{name}`"))
    }

    pub fn insert(&mut self, name: String, tensor: Tensor) {
        self.tensors.insert(name, tensor);
    }

    /// Names in stable (lexicographic) order.
    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.contains(name)
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &String> {
        self.trainable.iter()
    }

    pub fn set_trainable(&mut self, names: BTreeSet<String>) {
        self.trainable = names;
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in &self.tensors {
            if !t.is_finite() {
                return Err(Error::Config(format!("parameter `{name}` is non-finite")));
            }
        }
        Ok(())
    }

    /// Byte-level equality of all tensor data.
    pub fn bit_identical(&self, other: &Parameters) -> bool {
        if self.tensors.len() != other.tensors.len() {
            return false;
        }
        self.tensors.iter().all(|(name, t)| {
            other.tensors.get(name).is_some_and(|o| {
                t.shape == o.shape
                    && t.data
                        .iter()
                        .zip(&o.data)
                        .all(|(a, b)| a.to_bits() == b.to_bits())
            })
        })
    }
}

pub type GradMap = BTreeMap<String, Vec<f64>>;

/// Deterministic initialization: scaled Gaussian (std = d_model^-1/2) for all
/// weight matrices, ones for norm gains. Each tensor draws from its own
/// seed stream keyed by name, so the same (config, seed) is bit-identical
/// regardless of construction order.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Parameters> {
    config.validate()?;
    let std = 1.0 / (config.d_model as f64).sqrt();
    let mut tensors = BTreeMap::new();

    let matrix = |name: &str, rows: usize, cols: usize, tensors: &mut BTreeMap<String, Tensor>| {
        let mut rng = Rng::derived(seed, &[tags::INIT, crate::rng::fnv1a(name.as_bytes())]);
        let data: Vec<f64> = (0..rows * cols).map(|_| std * rng.normal()).collect();
        tensors.insert(name.to_string(), Tensor::new(vec![rows, cols], data));
    };
    let gain = |name: &str, dim: usize, tensors: &mut BTreeMap<String, Tensor>| {
        tensors.insert(name.to_string(), Tensor::full(vec![dim], 1.0));
    };

    matrix("embed.tok", config.vocab_size, config.d_model, &mut tensors);
    matrix("embed.pos", config.max_seq_len, config.d_model, &mut tensors);
    for l in 0..config.n_layers {
        gain(&format!("layer{l}.norm1.gain"), config.d_model, &mut tensors);
        for w in ["wq", "wk", "wv", "wo"] {
            matrix(
                &format!("layer{l}.attn.{w}"),
                config.d_model,
                config.d_model,
                &mut tensors,
            );
        }
        gain(&format!("layer{l}.norm2.gain"), config.d_model, &mut tensors);
        matrix(&format!("layer{l}.mlp.w1"), config.d_model, config.d_ff, &mut tensors);
        matrix(&format!("layer{l}.mlp.w2"), config.d_ff, config.d_model, &mut tensors);
    }
    gain("final_norm.gain", config.d_model, &mut tensors);
    matrix("unembed.w", config.d_model, config.vocab_size, &mut tensors);

    let trainable: BTreeSet<String> = tensors.keys().cloned().collect();
    Ok(Parameters {
        config: *config,
        lora: None,
        tensors,
        trainable,
    })
}

/// Parameter names that receive adapters under `targets`.
fn lora_target_names(config: &ModelConfig, targets: LoraTargets) -> Vec<String> {
    let mut names = Vec::new();
    for l in 0..config.n_layers {
        if targets.kv {
            names.push(format!("layer{l}.attn.wk"));
            names.push(format!("layer{l}.attn.wv"));
        }
        if targets.mlp {
            names.push(format!("layer{l}.mlp.w1"));
            names.push(format!("layer{l}.mlp.w2"));
        }
    }
    names
}

/// Attach low-rank adapters: A random-init, B zero-init, base weights frozen.
/// At initialization the forward output is identical to the base model.
pub fn attach_lora(params: &Parameters, cfg: &LoraConfig, seed: u64) -> Result<Parameters> {
    if cfg.rank == 0 {
        return Err(Error::Config("LoRA rank must be ≥ 1".into()));
    }
    let mut out = params.clone();
    let mut trainable = BTreeSet::new();
    for name in lora_target_names(&params.config, cfg.targets) {
        let (rows, cols) = params.get(&name).dims2();
        let min_dim = rows.min(cols);
        if cfg.rank >= min_dim {
            return Err(Error::RankTooLarge {
                rank: cfg.rank,
                target: name,
                min_dim,
            });
        }
        let a_name = format!("{name}.lora_a");
        let b_name = format!("{name}.lora_b");
        let mut rng = Rng::derived(seed, &[tags::LORA, crate::rng::fnv1a(a_name.as_bytes())]);
        let std = 1.0 / (rows as f64).sqrt();
        let a_data: Vec<f64> = (0..rows * cfg.rank).map(|_| std * rng.normal()).collect();
        out.insert(a_name.clone(), Tensor::new(vec![rows, cfg.rank], a_data));
        out.insert(b_name.clone(), Tensor::zeros(vec![cfg.rank, cols]));
        trainable.insert(a_name);
        trainable.insert(b_name);
    }
    out.lora = Some(*cfg);
    out.set_trainable(trainable);
    Ok(out)
}

/// One forward construction, shared by evaluation and training paths.
struct Forward<'a> {
    tape: &'a mut Tape,
    bindings: Vec<(String, TensorId)>,
    train: bool,
}

impl<'a> Forward<'a> {
    fn leaf(&mut self, params: &Parameters, name: &str) -> TensorId {
        let t = params.get(name);
        let requires = self.train && params.is_trainable(name);
        let id = self
            .tape
            .leaf_owned(t.data.clone(), t.shape.clone(), requires);
        if requires {
            self.bindings.push((name.to_string(), id));
        }
        id
    }

    /// h · W, plus scaled (h·A)·B when an adapter is attached to `name`.
    fn project(&mut self, params: &Parameters, h: TensorId, name: &str) -> Result<TensorId> {
        let w = self.leaf(params, name);
        let base = self.tape.matmul(h, w)?;
        let a_name = format!("{name}.lora_a");
        if let (Some(cfg), true) = (&params.lora, params.tensors.contains_key(&a_name)) {
            let a = self.leaf(params, &a_name);
            let b = self.leaf(params, &format!("{name}.lora_b"));
            let ha = self.tape.matmul(h, a)?;
            let hab = self.tape.matmul(ha, b)?;
            let scaled = self.tape.scale(hab, cfg.effective_scaling());
            return Ok(self.tape.add(base, scaled)?);
        }
        Ok(base)
    }
}

fn build_forward(
    tape: &mut Tape,
    params: &Parameters,
    tokens: &[u32],
    train: bool,
) -> Result<(TensorId, Vec<(String, TensorId)>)> {
    let cfg = &params.config;
    let t = tokens.len();
    if t == 0 {
        return Err(Error::EmptyInput("token sequence"));
    }
    if t > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            total: t,
            max: cfg.max_seq_len,
            ctx_tokens: 0,
            target_tokens: t,
        });
    }
    let mut fwd = Forward {
        tape,
        bindings: Vec::new(),
        train,
    };

    let tok_emb = fwd.leaf(params, "embed.tok");
    let pos_emb = fwd.leaf(params, "embed.pos");
    let tok = fwd.tape.gather(tok_emb, tokens)?;
    let pos_ids: Vec<u32> = (0..t as u32).collect();
    let pos = fwd.tape.gather(pos_emb, &pos_ids)?;
    let mut x = fwd.tape.add(tok, pos)?;

    let head_dim = cfg.head_dim();
    let scale = 1.0 / (head_dim as f64).sqrt();
    for l in 0..cfg.n_layers {
        let norm1 = fwd.leaf(params, &format!("layer{l}.norm1.gain"));
        let h = fwd.tape.rms_norm(x, norm1)?;
        let q = fwd.project(params, h, &format!("layer{l}.attn.wq"))?;
        let k = fwd.project(params, h, &format!("layer{l}.attn.wk"))?;
        let v = fwd.project(params, h, &format!("layer{l}.attn.wv"))?;

        let mut heads = Vec::with_capacity(cfg.n_heads);
        for hd in 0..cfg.n_heads {
            let start = hd * head_dim;
            let qh = fwd.tape.slice_cols(q, start, head_dim)?;
            let kh = fwd.tape.slice_cols(k, start, head_dim)?;
            let vh = fwd.tape.slice_cols(v, start, head_dim)?;
            let scores = fwd.tape.matmul_nt(qh, kh)?;
            let scaled = fwd.tape.scale(scores, scale);
            let probs = fwd.tape.causal_softmax(scaled)?;
            heads.push(fwd.tape.matmul(probs, vh)?);
        }
        let ctx = fwd.tape.concat_cols(&heads)?;
        let attn = fwd.project(params, ctx, &format!("layer{l}.attn.wo"))?;
        x = fwd.tape.add(x, attn)?;

        let norm2 = fwd.leaf(params, &format!("layer{l}.norm2.gain"));
        let h2 = fwd.tape.rms_norm(x, norm2)?;
        let m1 = fwd.project(params, h2, &format!("layer{l}.mlp.w1"))?;
        let act = fwd.tape.gelu(m1);
        let m2 = fwd.project(params, act, &format!("layer{l}.mlp.w2"))?;
        x = fwd.tape.add(x, m2)?;
    }

    let final_norm = fwd.leaf(params, "final_norm.gain");
    let normed = fwd.tape.rms_norm(x, final_norm)?;
    let unembed = fwd.leaf(params, "unembed.w");
    let logits = fwd.tape.matmul(normed, unembed)?;
    Ok((logits, fwd.bindings))
}

/// Next-token logits for every position; causal, so row t depends only on
/// tokens ≤ t.
pub fn forward_logits(params: &Parameters, tokens: &[u32]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (logits, _) = build_forward(&mut tape, params, tokens, false)?;
    Ok(tape.detach(logits))
}

/// Shift a prompt into next-token (targets, mask), one entry per logits row.
/// The logits at position t score token t+1; the final row predicts past the
/// end of the sequence, so it is padded with a never-read unmasked target.
fn shifted_targets(prompt: &PromptSequence) -> Result<(Vec<u32>, Vec<u8>)> {
    if prompt.tokens.len() < 2 {
        return Err(Error::EmptyInput("prompt too short to score"));
    }
    let mut targets: Vec<u32> = prompt.tokens[1..].to_vec();
    let mut mask: Vec<u8> = prompt.loss_mask[1..].to_vec();
    targets.push(0);
    mask.push(0);
    if mask.iter().all(|&m| m == 0) {
        return Err(Error::InvalidMask);
    }
    Ok((targets, mask))
}

/// Mean masked-token NLL of a prompt under frozen parameters.
pub fn sequence_nll(params: &Parameters, prompt: &PromptSequence) -> Result<f64> {
    let (targets, mask) = shifted_targets(prompt)?;
    let mut tape = Tape::new();
    let (logits, _) = build_forward(&mut tape, params, &prompt.tokens, false)?;
    let loss = tape.softmax_cross_entropy_masked(logits, &targets, &mask)?;
    Ok(tape.scalar_value(loss))
}

/// Mean masked NLL plus exact gradients for every trainable parameter.
pub fn training_loss_and_grads(
    params: &Parameters,
    prompt: &PromptSequence,
) -> Result<(f64, GradMap)> {
    let (targets, mask) = shifted_targets(prompt)?;
    let mut tape = Tape::new();
    let (logits, bindings) = build_forward(&mut tape, params, &prompt.tokens, true)?;
    let loss = tape.softmax_cross_entropy_masked(logits, &targets, &mask)?;
    let value = tape.scalar_value(loss);
    tape.backward(loss)?;
    let mut grads = GradMap::new();
    for (name, id) in bindings {
        grads.insert(name, tape.grad_or_zeros(id));
    }
    Ok((value, grads))
}

/// Greedy (temperature-0) decoding until the stop token, `max_new` tokens,
/// or the model's length limit. The stop token is not included in the
/// returned continuation.
pub fn greedy_continuation(
    params: &Parameters,
    prefix: &[u32],
    stop: u32,
    max_new: usize,
) -> Result<Vec<u32>> {
    if prefix.is_empty() {
        return Err(Error::EmptyInput("prefix"));
    }
    let mut seq = prefix.to_vec();
    let mut out = Vec::new();
    while out.len() < max_new && seq.len() < params.config.max_seq_len {
        let logits = forward_logits(params, &seq)?;
        let vocab = params.config.vocab_size;
        let last = &logits.data[(seq.len() - 1) * vocab..seq.len() * vocab];
        let next = argmax_tie_lowest(last) as u32;
        if next == stop {
            break;
        }
        out.push(next);
        seq.push(next);
    }
    Ok(out)
}

/// Total log-probability of each label continuation after `prefix`.
/// The caller takes the argmax; ties break to the lowest index.
pub fn score_labels(
    params: &Parameters,
    prefix: &[u32],
    labels: &[Vec<u32>],
) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("label list"));
    }
    if prefix.is_empty() {
        return Err(Error::EmptyInput("prefix"));
    }
    let vocab = params.config.vocab_size;
    let mut scores = Vec::with_capacity(labels.len());
    for label in labels {
        if label.is_empty() {
            return Err(Error::EmptyInput("label tokens"));
        }
        let mut seq = prefix.to_vec();
        seq.extend_from_slice(label);
        let logits = forward_logits(params, &seq)?;
        let mut total = 0.0;
        for (offset, &tok) in label.iter().enumerate() {
            let pos = prefix.len() + offset - 1; // logits at pos score token pos+1
            let row = &logits.data[pos * vocab..(pos + 1) * vocab];
            if tok as usize >= vocab {
                return Err(Error::TokenOutOfRange {
                    id: tok,
                    vocab_size: vocab,
                });
            }
            total += row[tok as usize] - crate::numerics::log_sum_exp(row);
        }
        scores.push(total);
    }
    Ok(scores)
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_tie_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
