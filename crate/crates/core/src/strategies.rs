//! The three adaptation strategies behind one predictor interface:
//! in-context only, fine-tuning only, and fine-tuning on k-shot prompts —
//! plus the i.i.d. fine-tuning baseline.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{
    argmax_tie_lowest, greedy_continuation, score_labels, Parameters,
};
use crate::optim::Optimizer;
use crate::prequential::HpConfig;
use crate::prompt::{build_eval_prompt, build_training_sequence, tokenize, Example, Template, EOS};
use crate::rng::{tags, Rng};
use crate::runner::parse_response;
use crate::tasks::Dataset;

/// Greedy-decoding budget for open-ended responses.
pub const DEFAULT_MAX_NEW: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Prequential,
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    IclOnly,
    FtOnly(TrainMode),
    IclFt(TrainMode),
}

impl StrategyKind {
    pub fn trains(&self) -> bool {
        !matches!(self, StrategyKind::IclOnly)
    }

    /// Context size used when building training sequences: fine-tuning
    /// without in-context examples always trains on bare pairs.
    pub fn train_k(&self, hp_k: usize) -> usize {
        match self {
            StrategyKind::FtOnly(_) => 0,
            _ => hp_k,
        }
    }

    pub fn label(&self) -> String {
        match self {
            StrategyKind::IclOnly => "icl-only".into(),
            StrategyKind::FtOnly(TrainMode::Prequential) => "ft-only".into(),
            StrategyKind::FtOnly(TrainMode::Iid) => "ft-only-iid".into(),
            StrategyKind::IclFt(TrainMode::Prequential) => "icl-ft".into(),
            StrategyKind::IclFt(TrainMode::Iid) => "icl-ft-iid".into(),
        }
    }
}

/// Core prediction path shared by the strategies and the prequential loop:
/// given already-chosen context examples, build the evaluation prompt and
/// answer by MAP over the label set (classification) or greedy decoding.
pub fn predict_with_context(
    params: &Parameters,
    ctx: &[Example],
    x: &str,
    labels: Option<&[String]>,
    template: &Template,
    max_new: usize,
) -> Result<String> {
    let prefix = build_eval_prompt(ctx, x, template, params.config.max_seq_len)?;
    match labels {
        Some(labels) if !labels.is_empty() => {
            let label_tokens: Vec<Vec<u32>> = labels.iter().map(|l| tokenize(l)).collect();
            let scores = score_labels(params, &prefix, &label_tokens)?;
            Ok(labels[argmax_tie_lowest(&scores)].clone())
        }
        _ => {
            let continuation = greedy_continuation(params, &prefix, EOS, max_new)?;
            Ok(crate::prompt::detokenize(&continuation))
        }
    }
}

/// A frozen parameter set plus everything needed to answer queries.
pub struct Predictor<'a> {
    pub params: &'a Parameters,
    pub kind: StrategyKind,
    pub k_eval: usize,
    pub template: &'a Template,
    /// Source of in-context examples at inference time.
    pub train: &'a Dataset,
    pub max_new: usize,
}

impl<'a> Predictor<'a> {
    pub fn new(
        params: &'a Parameters,
        kind: StrategyKind,
        k_eval: usize,
        template: &'a Template,
        train: &'a Dataset,
    ) -> Result<Self> {
        if k_eval > 0 && train.is_empty() {
            return Err(crate::Error::EmptyInput(
                "context sampling requires a non-empty train set",
            ));
        }
        Ok(Self {
            params,
            kind,
            k_eval,
            template,
            train,
            max_new: DEFAULT_MAX_NEW,
        })
    }

    /// Answer one query: sample min(k_eval, |train|) context examples
    /// without replacement (seeded), then predict.
    pub fn predict(&self, x: &str, seed: u64) -> Result<String> {
        let n_ctx = self.k_eval.min(self.train.len());
        let mut rng = Rng::from_seed(seed);
        let idx = rng.sample_without_replacement(self.train.len(), n_ctx);
        let ctx: Vec<Example> = idx.iter().map(|&i| self.train.examples[i].clone()).collect();
        predict_with_context(
            self.params,
            &ctx,
            x,
            self.train.labels.as_deref(),
            self.template,
            self.max_new,
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRecord {
    pub index: usize,
    pub raw: String,
    pub parsed: String,
    pub expected: String,
    pub correct: bool,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub accuracy: f64,
    pub records: Vec<EvalRecord>,
}

/// Raw model output vs expected response: parse, trim, exact match.
pub fn response_matches(raw: &str, expected: &str) -> (String, bool) {
    let parsed = parse_response(raw);
    let ok = parsed == expected.trim();
    (parsed, ok)
}

/// Accuracy of an arbitrary prediction function over a test set. Queries
/// fan out in parallel; each receives a seed derived from (run seed, query
/// index), so the result is identical in any execution order.
pub fn evaluate_with<F>(predict: F, test: &Dataset, seed: u64) -> Result<EvalResult>
where
    F: Fn(&str, u64) -> Result<String> + Sync,
{
    if test.is_empty() {
        return Err(crate::Error::EmptyInput("test set"));
    }
    let records = crate::par::try_map_indexed(test.len(), |i| {
        let ex = &test.examples[i];
        let raw = predict(&ex.x, crate::rng::derive_seed(seed, &[tags::QUERY_CTX, i as u64]))?;
        let (parsed, correct) = response_matches(&raw, &ex.y);
        Ok::<EvalRecord, crate::Error>(EvalRecord {
            index: i,
            raw,
            parsed,
            expected: ex.y.clone(),
            correct,
        })
    })?;
    let matches = records.iter().filter(|r| r.correct).count();
    Ok(EvalResult {
        accuracy: matches as f64 / test.len() as f64,
        records,
    })
}

/// Accuracy of a [`Predictor`] over a test set.
pub fn evaluate(p: &Predictor, test: &Dataset, seed: u64) -> Result<EvalResult> {
    evaluate_with(|x, s| p.predict(x, s), test, seed)
}

/// Outcome of a training run: the adapted parameters plus bookkeeping used
/// by the leakage instrumentation and step-count assertions.
pub struct TrainOutcome {
    pub params: Parameters,
    pub grad_steps: u64,
    /// Fingerprints of every example that reached a gradient step.
    pub trained_fingerprints: BTreeSet<u64>,
}

/// Standard i.i.d. fine-tuning: `epochs` shuffled passes over the train set,
/// one optimizer step per target example, context freshly sampled from the
/// full train set (excluding the target).
pub fn train_iid(
    base: &Parameters,
    train: &Dataset,
    kind: StrategyKind,
    hp: &HpConfig,
    template: &Template,
    seed: u64,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(crate::Error::EmptyInput("train set"));
    }
    let mut params = hp.apply_adapter(base, seed)?;
    let mut opt = Optimizer::new(hp.optimizer);
    let mut fingerprints = BTreeSet::new();
    let mut grad_steps = 0u64;
    let k = kind.train_k(hp.k);
    for epoch in 0..hp.epochs {
        let mut order_rng = Rng::derived(seed, &[tags::IID_SHUFFLE, epoch as u64]);
        let order = order_rng.permutation(train.len());
        for &target_idx in &order {
            let target = &train.examples[target_idx];
            let n_ctx = k.min(train.len() - 1);
            let mut ctx_rng = Rng::derived(
                seed,
                &[tags::TRAIN_CTX, epoch as u64, target_idx as u64],
            );
            // Sample from the train set minus the target.
            let pool: Vec<usize> = (0..train.len()).filter(|&i| i != target_idx).collect();
            let picks = ctx_rng.sample_without_replacement(pool.len(), n_ctx);
            let ctx: Vec<Example> = picks
                .iter()
                .map(|&i| train.examples[pool[i]].clone())
                .collect();
            let seq = build_training_sequence(&ctx, target, template, params.config.max_seq_len)?;
            for ex in ctx.iter().chain(std::iter::once(target)) {
                fingerprints.insert(ex.fingerprint());
            }
            let (_, grads) = crate::model::training_loss_and_grads(&params, &seq)?;
            opt.step(&mut params, &grads, hp.lr)?;
            grad_steps += 1;
        }
    }
    Ok(TrainOutcome {
        params,
        grad_steps,
        trained_fingerprints: fingerprints,
    })
}
