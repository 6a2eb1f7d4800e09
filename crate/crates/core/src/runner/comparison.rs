//! Strategy comparison across sample-size budgets and seeds.
//!
//! Every (seed, budget) cell splits the task with the nested-subsampling
//! property, adapts each requested strategy on the train side only, and
//! evaluates on the shared held-out test side. Cells run in parallel; rows
//! come back in (seed, budget, strategy) order regardless of scheduling.
//! Result CSVs contain no wall-clock values, so identical configurations
//! rewrite byte-identical files; timings go to their own file.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Parameters;
use crate::prequential::{hp_select, prequential_average, MetricKind};
use crate::rng::{derive_seed, tags};
use crate::strategies::{evaluate, train_iid, Predictor, StrategyKind, TrainMode};
use crate::tasks::{split, Dataset, SplitSpec};

use super::config::RunConfig;
use super::report::{aggregate, write_aggregate_csv, AggregateRow};

#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub task: String,
    pub strategy: String,
    pub model_tag: String,
    pub budget: usize,
    pub seed: u64,
    pub selected_hp: String,
    pub test_accuracy: f64,
    pub prequential_score: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub task: String,
    pub strategy: String,
    pub budget: usize,
    pub seed: u64,
    pub phase: &'static str,
    pub millis: f64,
}

pub struct ComparisonOutput {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub timings: Vec<TimingRow>,
}

/// Assert that everything that reached a gradient step came from the train
/// split.
fn verify_no_leakage(trained: &BTreeSet<u64>, train: &Dataset, context: &str) -> Result<()> {
    let allowed: BTreeSet<u64> = train.examples.iter().map(|e| e.fingerprint()).collect();
    if let Some(fp) = trained.difference(&allowed).next() {
        return Err(Error::Leakage(format!(
            "{context}: example fingerprint {fp:#x} reached a gradient step \
             but is not in the train split"
        )));
    }
    Ok(())
}

struct Cell {
    seed_idx: usize,
    budget: usize,
}

pub fn run_comparison(cfg: &RunConfig, base: &Parameters, model_tag: &str) -> Result<ComparisonOutput> {
    let data = cfg.task.build()?;
    let max_budget = *cfg.run.budgets.last().expect("validated non-empty");
    if max_budget + cfg.run.n_test > data.len() {
        return Err(Error::SplitTooLarge {
            n_train: max_budget,
            n_test: cfg.run.n_test,
            len: data.len(),
        });
    }
    let strategies = cfg.strategy_kinds()?;
    let metric = cfg.run.selection_metric.unwrap_or(if data.labels.is_some() {
        MetricKind::Accuracy
    } else {
        MetricKind::Nll
    });

    let mut cells = Vec::new();
    for seed_idx in 0..cfg.run.n_seeds {
        for &budget in &cfg.run.budgets {
            cells.push(Cell { seed_idx, budget });
        }
    }

    let results: Vec<(Vec<ResultRow>, Vec<TimingRow>)> =
        crate::par::try_map_indexed(cells.len(), |c| {
            run_cell(cfg, base, model_tag, &data, &strategies, metric, &cells[c])
        })?;

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (r, t) in results {
        rows.extend(r);
        timings.extend(t);
    }
    let aggregates = aggregate(&rows);
    Ok(ComparisonOutput {
        rows,
        aggregates,
        timings,
    })
}

fn run_cell(
    cfg: &RunConfig,
    base: &Parameters,
    model_tag: &str,
    data: &Dataset,
    strategies: &[StrategyKind],
    metric: MetricKind,
    cell: &Cell,
) -> Result<(Vec<ResultRow>, Vec<TimingRow>)> {
    let seed_value = cfg.run.base_seed + cell.seed_idx as u64;
    let cell_seed = derive_seed(cfg.run.base_seed, &[cell.seed_idx as u64, cell.budget as u64]);
    let (train, test) = split(
        data,
        &SplitSpec {
            seed: seed_value,
            n_train: cell.budget,
            n_test: cfg.run.n_test,
        },
    )?;

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut push_timing = |strategy: &str, phase: &'static str, start: Instant| {
        timings.push(TimingRow {
            task: data.name.clone(),
            strategy: strategy.to_string(),
            budget: cell.budget,
            seed: seed_value,
            phase,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
    };

    for kind in strategies {
        match kind {
            StrategyKind::IclOnly => {
                for &k in &cfg.run.k_eval {
                    let label = format!("icl-only:k={k}");
                    let start = Instant::now();
                    let result = evaluate_strategy(
                        cfg, base, &train, &test, *kind, k, cell_seed,
                    )?;
                    push_timing(&label, "eval", start);
                    rows.push(ResultRow {
                        task: data.name.clone(),
                        strategy: label,
                        model_tag: model_tag.to_string(),
                        budget: cell.budget,
                        seed: seed_value,
                        selected_hp: String::new(),
                        test_accuracy: result,
                        prequential_score: None,
                    });
                }
            }
            StrategyKind::FtOnly(TrainMode::Prequential)
            | StrategyKind::IclFt(TrainMode::Prequential) => {
                let label = kind.label();
                let k_train = kind.train_k(cfg.run.k_train);
                let grid = cfg.grid.expand(k_train)?;
                let start = Instant::now();
                let (hp, trace) = hp_select(
                    base,
                    &train,
                    &grid,
                    &cfg.template,
                    derive_seed(cell_seed, &[tags::SEED_STREAM]),
                    metric,
                )?;
                push_timing(&label, "train", start);
                verify_no_leakage(&trace.trained_fingerprints, &train, &label)?;
                let score = prequential_average(&trace, metric, None)?.value;
                let k_eval = match kind {
                    StrategyKind::FtOnly(_) => 0,
                    _ => hp.k,
                };
                let start = Instant::now();
                let acc = evaluate_params(
                    cfg,
                    &trace.final_params,
                    &train,
                    &test,
                    *kind,
                    k_eval,
                    cell_seed,
                )?;
                push_timing(&label, "eval", start);
                rows.push(ResultRow {
                    task: data.name.clone(),
                    strategy: label,
                    model_tag: model_tag.to_string(),
                    budget: cell.budget,
                    seed: seed_value,
                    selected_hp: hp.to_string(),
                    test_accuracy: acc,
                    prequential_score: Some(score),
                });
            }
            StrategyKind::FtOnly(TrainMode::Iid) | StrategyKind::IclFt(TrainMode::Iid) => {
                let label = kind.label();
                let k_train = kind.train_k(cfg.run.k_train);
                let hp = cfg.iid_hp(k_train)?;
                let start = Instant::now();
                let outcome = train_iid(
                    base,
                    &train,
                    *kind,
                    &hp,
                    &cfg.template,
                    derive_seed(cell_seed, &[tags::IID_SHUFFLE]),
                )?;
                push_timing(&label, "train", start);
                verify_no_leakage(&outcome.trained_fingerprints, &train, &label)?;
                let k_eval = match kind {
                    StrategyKind::FtOnly(_) => 0,
                    _ => hp.k,
                };
                let start = Instant::now();
                let acc = evaluate_params(
                    cfg,
                    &outcome.params,
                    &train,
                    &test,
                    *kind,
                    k_eval,
                    cell_seed,
                )?;
                push_timing(&label, "eval", start);
                rows.push(ResultRow {
                    task: data.name.clone(),
                    strategy: label,
                    model_tag: model_tag.to_string(),
                    budget: cell.budget,
                    seed: seed_value,
                    selected_hp: hp.to_string(),
                    test_accuracy: acc,
                    prequential_score: None,
                });
            }
        }
    }
    Ok((rows, timings))
}

fn evaluate_strategy(
    cfg: &RunConfig,
    params: &Parameters,
    train: &Dataset,
    test: &Dataset,
    kind: StrategyKind,
    k_eval: usize,
    cell_seed: u64,
) -> Result<f64> {
    evaluate_params(cfg, params, train, test, kind, k_eval, cell_seed)
}

fn evaluate_params(
    cfg: &RunConfig,
    params: &Parameters,
    train: &Dataset,
    test: &Dataset,
    kind: StrategyKind,
    k_eval: usize,
    cell_seed: u64,
) -> Result<f64> {
    let mut predictor = Predictor::new(params, kind, k_eval, &cfg.template, train)?;
    predictor.max_new = cfg.run.max_new;
    let eval_seed = derive_seed(cell_seed, &[tags::EVAL, k_eval as u64]);
    let result = if cfg.run.resample_context {
        evaluate(&predictor, test, eval_seed)?
    } else {
        // One fixed context for the whole test pass.
        let mut rng = crate::rng::Rng::derived(eval_seed, &[tags::QUERY_CTX]);
        let n_ctx = k_eval.min(train.len());
        let idx = rng.sample_without_replacement(train.len(), n_ctx);
        let ctx: Vec<crate::prompt::Example> =
            idx.iter().map(|&i| train.examples[i].clone()).collect();
        crate::strategies::evaluate_with(
            |x, _| {
                crate::strategies::predict_with_context(
                    params,
                    &ctx,
                    x,
                    train.labels.as_deref(),
                    &cfg.template,
                    cfg.run.max_new,
                )
            },
            test,
            eval_seed,
        )?
    };
    Ok(result.accuracy)
}

/// Write results.csv, aggregate.csv, timings.csv, and manifest.json.
pub fn write_outputs(out_dir: &Path, cfg: &RunConfig, out: &ComparisonOutput) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_results_csv(&out_dir.join("results.csv"), &out.rows)?;
    write_aggregate_csv(&out_dir.join("aggregate.csv"), &out.aggregates)?;

    let mut w = csv::Writer::from_path(out_dir.join("timings.csv"))?;
    w.write_record(["task", "strategy", "budget", "seed", "phase", "millis"])?;
    for t in &out.timings {
        w.write_record([
            t.task.clone(),
            t.strategy.clone(),
            t.budget.to_string(),
            t.seed.to_string(),
            t.phase.to_string(),
            format!("{:.3}", t.millis),
        ])?;
    }
    w.flush()?;

    let seeds: Vec<u64> = (0..cfg.run.n_seeds)
        .map(|i| cfg.run.base_seed + i as u64)
        .collect();
    let manifest = serde_json::json!({
        "config_hash": cfg.config_hash(),
        "crate_version": env!("CARGO_PKG_VERSION"),
        "model_tag": out.rows.first().map(|r| r.model_tag.clone()).unwrap_or_default(),
        "task": out.rows.first().map(|r| r.task.clone()).unwrap_or_default(),
        "seeds": seeds,
        "budgets": cfg.run.budgets,
        "strategies": cfg.run.strategies,
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(())
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "task",
        "strategy",
        "model_tag",
        "budget",
        "seed",
        "selected_hp",
        "test_accuracy",
        "prequential_score",
    ])?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.strategy.clone(),
            r.model_tag.clone(),
            r.budget.to_string(),
            r.seed.to_string(),
            r.selected_hp.clone(),
            format!("{:.6}", r.test_accuracy),
            r.prequential_score
                .map(|s| format!("{s:.6}"))
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
