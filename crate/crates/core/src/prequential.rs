//! Interleaved next-step evaluation and k-shot gradient training, plus the
//! prequential-average metric and grid-based hyperparameter selection.
//!
//! One run walks the dataset in order. Example i is first predicted from a
//! context sampled among its predecessors (accuracy and NLL are both
//! recorded), then trained on for E epochs with freshly sampled context each
//! epoch. Context draws are seeded per (step, epoch), never from carried RNG
//! state, which is what makes the per-step loss prefix invariant to
//! mutations of later examples.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{attach_lora, sequence_nll, LoraConfig, Parameters};
use crate::optim::{Optimizer, OptimizerKind};
use crate::prompt::{build_scoring_sequence, build_training_sequence, Example, Template};
use crate::rng::{tags, Rng};
use crate::strategies::{predict_with_context, response_matches, DEFAULT_MAX_NEW};
use crate::tasks::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "rank")]
pub enum AdapterKind {
    None,
    Lora(usize),
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterKind::None => write!(f, "none"),
            AdapterKind::Lora(rank) => write!(f, "lora{rank}"),
        }
    }
}

/// One grid point: learning rate, epochs per example, context size,
/// optimizer, adapter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpConfig {
    pub lr: f64,
    pub epochs: usize,
    pub k: usize,
    pub optimizer: OptimizerKind,
    pub adapter: AdapterKind,
}

impl HpConfig {
    pub fn new(lr: f64, epochs: usize, k: usize) -> Self {
        Self {
            lr,
            epochs,
            k,
            optimizer: OptimizerKind::Adafactor,
            adapter: AdapterKind::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }

    /// Materialize the adapter choice on a base parameter set.
    pub fn apply_adapter(&self, base: &Parameters, seed: u64) -> Result<Parameters> {
        match self.adapter {
            AdapterKind::None => Ok(base.clone()),
            AdapterKind::Lora(rank) => attach_lora(base, &LoraConfig::new(rank), seed),
        }
    }
}

impl fmt::Display for HpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lr={} E={} K={} opt={} adapter={}",
            self.lr, self.epochs, self.k, self.optimizer, self.adapter
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    Nll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    /// Index of the evaluated example in the dataset order.
    pub x_id: usize,
    /// 0/1 next-step accuracy.
    pub acc: f64,
    /// Mean per-token NLL of the true response under the same context.
    pub nll: f64,
    pub cum_acc: f64,
    pub cum_nll: f64,
    /// Context examples available to this step's prediction.
    pub n_ctx: usize,
    /// Gradient steps taken after this step's evaluation.
    pub epoch_steps: usize,
    pub wall_ms: f64,
}

pub struct PrequentialTrace {
    pub records: Vec<StepRecord>,
    pub final_params: Parameters,
    pub grad_steps: u64,
    pub trained_fingerprints: BTreeSet<u64>,
}

impl PrequentialTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cum_acc(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_acc)
    }

    pub fn cum_nll(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_nll)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrequentialScore {
    pub value: f64,
    pub kind: MetricKind,
    /// Number of trailing steps averaged; the full run when absent.
    pub window: Option<usize>,
}

/// Algorithm core: for each example, predict-then-train.
///
/// Step i draws min(K, i−1) context examples from the i−1 predecessors (the
/// dataset order is the data order; the caller permutes if desired), records
/// next-step accuracy and NLL, updates exact cumulative sums, then takes E
/// gradient steps on freshly sampled k-shot training sequences.
pub fn run_prequential(
    base: &Parameters,
    data: &Dataset,
    hp: &HpConfig,
    template: &Template,
    seed: u64,
) -> Result<PrequentialTrace> {
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    hp.validate()?;
    let mut params = hp.apply_adapter(base, seed)?;
    let mut opt = Optimizer::new(hp.optimizer);
    let labels = data.labels.as_deref();
    let mut records = Vec::with_capacity(data.len());
    let mut cum_acc = 0.0f64;
    let mut cum_nll = 0.0f64;
    let mut grad_steps = 0u64;
    let mut fingerprints = BTreeSet::new();

    for i in 1..=data.len() {
        let start = Instant::now();
        let target = &data.examples[i - 1];
        let avail = i - 1;
        let n_ctx = hp.k.min(avail);

        // (a) context for the prediction
        let mut rng = Rng::derived(seed, &[tags::PRED_CTX, i as u64]);
        let idx = rng.sample_without_replacement(avail, n_ctx);
        let ctx: Vec<Example> = idx.iter().map(|&j| data.examples[j].clone()).collect();

        // (b) next-step prediction and loss
        let raw = predict_with_context(&params, &ctx, &target.x, labels, template, DEFAULT_MAX_NEW)?;
        let (_, correct) = response_matches(&raw, &target.y);
        let acc = f64::from(correct);
        let scoring = build_scoring_sequence(&ctx, target, template, params.config.max_seq_len)?;
        let nll = sequence_nll(&params, &scoring)?;

        // (c) exact cumulative update
        cum_acc += acc;
        cum_nll += nll;

        // (d) E gradient steps with fresh context each epoch
        let mut epoch_steps = 0usize;
        for e in 1..=hp.epochs {
            let mut rng = Rng::derived(seed, &[tags::TRAIN_CTX, i as u64, e as u64]);
            let idx = rng.sample_without_replacement(avail, n_ctx);
            let train_ctx: Vec<Example> =
                idx.iter().map(|&j| data.examples[j].clone()).collect();
            let seq = build_training_sequence(
                &train_ctx,
                target,
                template,
                params.config.max_seq_len,
            )?;
            for ex in train_ctx.iter().chain(std::iter::once(target)) {
                fingerprints.insert(ex.fingerprint());
            }
            let (_, grads) = crate::model::training_loss_and_grads(&params, &seq)?;
            opt.step(&mut params, &grads, hp.lr)?;
            grad_steps += 1;
            epoch_steps += 1;
        }

        records.push(StepRecord {
            step: i,
            x_id: i - 1,
            acc,
            nll,
            cum_acc,
            cum_nll,
            n_ctx,
            epoch_steps,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    Ok(PrequentialTrace {
        records,
        final_params: params,
        grad_steps,
        trained_fingerprints: fingerprints,
    })
}

/// L_N/N over the whole run, or the mean of the last `window` steps.
pub fn prequential_average(
    trace: &PrequentialTrace,
    kind: MetricKind,
    window: Option<usize>,
) -> Result<PrequentialScore> {
    let n = trace.len();
    if n == 0 {
        return Err(Error::EmptyInput("trace"));
    }
    let take = window.unwrap_or(n);
    if take > n || take == 0 {
        return Err(Error::WindowTooLarge {
            window: take,
            len: n,
        });
    }
    let slice = &trace.records[n - take..];
    let value = match kind {
        MetricKind::Accuracy => slice.iter().map(|r| r.acc).sum::<f64>() / take as f64,
        MetricKind::Nll => slice.iter().map(|r| r.nll).sum::<f64>() / take as f64,
    };
    Ok(PrequentialScore {
        value,
        kind,
        window,
    })
}

/// Run every grid point from the same initial parameters and the same data
/// order; keep the one with the best prequential score. Ties break to lower
/// learning rate, then fewer epochs, then lower grid index. Returns the
/// winning configuration together with its trace — the trained parameters
/// come along for free.
pub fn hp_select(
    base: &Parameters,
    data: &Dataset,
    grid: &[HpConfig],
    template: &Template,
    seed: u64,
    metric: MetricKind,
) -> Result<(HpConfig, PrequentialTrace)> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("hyperparameter grid"));
    }
    let traces = crate::par::try_map_indexed(grid.len(), |g| {
        run_prequential(base, data, &grid[g], template, seed)
    })?;
    let mut scored: Vec<(f64, &HpConfig)> = Vec::with_capacity(grid.len());
    for (hp, trace) in grid.iter().zip(&traces) {
        scored.push((prequential_average(trace, metric, None)?.value, hp));
    }
    let mut winner = 0usize;
    for cand in 1..grid.len() {
        let (cs, ch) = scored[cand];
        let (ws, wh) = scored[winner];
        let better_score = match metric {
            MetricKind::Accuracy => cs > ws,
            MetricKind::Nll => cs < ws,
        };
        let tied = cs == ws;
        if better_score
            || (tied && (ch.lr < wh.lr || (ch.lr == wh.lr && ch.epochs < wh.epochs)))
        {
            winner = cand;
        }
    }
    let trace = traces.into_iter().nth(winner).expect("winner index valid");
    Ok((grid[winner], trace))
}

/// Position-wise statistics of the next-step metrics over seeded data
/// permutations, each run from a fresh copy of the base parameters.
/// Variances are population variances (÷n), so a single permutation yields
/// zeros.
#[derive(Debug, Clone)]
pub struct PositionCurve {
    pub mean_acc: Vec<f64>,
    pub var_acc: Vec<f64>,
    pub mean_nll: Vec<f64>,
    pub var_nll: Vec<f64>,
}

pub fn multi_permutation_curve(
    base: &Parameters,
    data: &Dataset,
    hp: &HpConfig,
    template: &Template,
    n_perms: usize,
    seed: u64,
) -> Result<PositionCurve> {
    if n_perms == 0 {
        return Err(Error::EmptyInput("n_perms"));
    }
    let traces = crate::par::try_map_indexed(n_perms, |p| {
        let mut rng = Rng::derived(seed, &[tags::PERMUTATION, p as u64]);
        let perm = rng.permutation(data.len());
        let permuted = Dataset {
            name: data.name.clone(),
            examples: perm.iter().map(|&i| data.examples[i].clone()).collect(),
            labels: data.labels.clone(),
        };
        let run_seed = crate::rng::derive_seed(seed, &[tags::PERM_RUN, p as u64]);
        run_prequential(base, &permuted, hp, template, run_seed)
    })?;
    let n = data.len();
    let m = n_perms as f64;
    let mut curve = PositionCurve {
        mean_acc: vec![0.0; n],
        var_acc: vec![0.0; n],
        mean_nll: vec![0.0; n],
        var_nll: vec![0.0; n],
    };
    for pos in 0..n {
        let accs: Vec<f64> = traces.iter().map(|t| t.records[pos].acc).collect();
        let nlls: Vec<f64> = traces.iter().map(|t| t.records[pos].nll).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / m;
        let var = |v: &[f64], mu: f64| v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m;
        curve.mean_acc[pos] = mean(&accs);
        curve.var_acc[pos] = var(&accs, curve.mean_acc[pos]);
        curve.mean_nll[pos] = mean(&nlls);
        curve.var_nll[pos] = var(&nlls, curve.mean_nll[pos]);
    }
    Ok(curve)
}

/// Trace export: one CSV row per step with the exact column set
/// (step, x_id, acc, nll, cum_acc, cum_nll, n_ctx, epoch_steps).
pub fn export_trace_csv(trace: &PrequentialTrace, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "x_id",
        "acc",
        "nll",
        "cum_acc",
        "cum_nll",
        "n_ctx",
        "epoch_steps",
    ])?;
    for r in &trace.records {
        w.write_record([
            r.step.to_string(),
            r.x_id.to_string(),
            format!("{:.1}", r.acc),
            format!("{:.12}", r.nll),
            format!("{:.1}", r.cum_acc),
            format!("{:.12}", r.cum_nll),
            r.n_ctx.to_string(),
            r.epoch_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
