use super::*;
use crate::model::{init_params, ModelConfig};
use crate::prompt::Example;
use crate::tasks::gen_keyed_classification;

fn model(seed: u64) -> Parameters {
    init_params(
        &ModelConfig {
            vocab_size: crate::prompt::VOCAB_SIZE,
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 256,
        },
        seed,
    )
    .unwrap()
}

fn template() -> Template {
    Template::default()
        .with_separator("\n\n")
        .with_query_suffix(" -> ")
}

fn task(n: usize, seed: u64) -> Dataset {
    gen_keyed_classification(2, 2, 1, n, seed).unwrap()
}

#[test]
fn eval_only_mode_keeps_params_byte_identical() {
    let base = model(1);
    let d = task(6, 2);
    let hp = HpConfig::new(1e-3, 0, 2);
    let trace = run_prequential(&base, &d, &hp, &template(), 7).unwrap();
    assert_eq!(trace.len(), 6);
    assert_eq!(trace.grad_steps, 0);
    assert!(trace.final_params.bit_identical(&base));
    assert!(trace.trained_fingerprints.is_empty());
}

#[test]
fn first_step_is_zero_context() {
    let base = model(2);
    let d = task(1, 3);
    let hp = HpConfig::new(1e-3, 1, 5);
    let trace = run_prequential(&base, &d, &hp, &template(), 9).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace.records[0].n_ctx, 0);
}

#[test]
fn gradient_step_count_is_n_times_e() {
    let base = model(3);
    let d = task(3, 4);
    let hp = HpConfig::new(1e-3, 2, 1);
    let trace = run_prequential(&base, &d, &hp, &template(), 11).unwrap();
    assert_eq!(trace.grad_steps, 6);
    assert!(trace.records.iter().all(|r| r.epoch_steps == 2));
}

#[test]
fn cumulative_sums_hold_bit_exactly() {
    let base = model(4);
    let d = task(8, 5);
    let hp = HpConfig::new(1e-3, 1, 2);
    let trace = run_prequential(&base, &d, &hp, &template(), 13).unwrap();
    let mut acc = 0.0f64;
    let mut nll = 0.0f64;
    for r in &trace.records {
        acc += r.acc;
        nll += r.nll;
        assert_eq!(acc.to_bits(), r.cum_acc.to_bits());
        assert_eq!(nll.to_bits(), r.cum_nll.to_bits());
    }
}

#[test]
fn loss_prefix_is_invariant_to_future_mutations() {
    let base = model(5);
    let mut d = task(8, 6);
    let hp = HpConfig::new(1e-3, 1, 2);
    let full = run_prequential(&base, &d, &hp, &template(), 15).unwrap();
    // Mutate examples after position 4 and rerun.
    let labels = d.labels.clone().unwrap();
    for ex in d.examples[4..].iter_mut() {
        *ex = Example::new(format!("{} zzz", ex.x), labels[0].clone());
    }
    let mutated = run_prequential(&base, &d, &hp, &template(), 15).unwrap();
    for i in 0..4 {
        let (a, b) = (&full.records[i], &mutated.records[i]);
        assert_eq!(a.acc.to_bits(), b.acc.to_bits(), "acc differs at step {i}");
        assert_eq!(a.nll.to_bits(), b.nll.to_bits(), "nll differs at step {i}");
    }
}

#[test]
fn frozen_zero_context_nll_trace_decomposes_into_sequence_nlls() {
    let base = model(6);
    let d = task(5, 7);
    let hp = HpConfig::new(1e-3, 0, 0);
    let trace = run_prequential(&base, &d, &hp, &template(), 17).unwrap();
    let mut total = 0.0;
    for ex in &d.examples {
        let seq =
            crate::prompt::build_training_sequence(&[], ex, &template(), 256).unwrap();
        total += crate::model::sequence_nll(&base, &seq).unwrap();
    }
    assert!(
        (trace.cum_nll() - total).abs() < 1e-10,
        "{} vs {total}",
        trace.cum_nll()
    );
}

#[test]
fn run_is_fully_reproducible() {
    let base = model(7);
    let d = task(6, 8);
    let hp = HpConfig::new(1e-3, 2, 2);
    let a = run_prequential(&base, &d, &hp, &template(), 19).unwrap();
    let b = run_prequential(&base, &d, &hp, &template(), 19).unwrap();
    assert!(a.final_params.bit_identical(&b.final_params));
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.acc.to_bits(), y.acc.to_bits());
        assert_eq!(x.nll.to_bits(), y.nll.to_bits());
    }
}

fn trace_from_accs(accs: &[f64]) -> PrequentialTrace {
    let mut records = Vec::new();
    let mut cum_acc = 0.0;
    for (i, &a) in accs.iter().enumerate() {
        cum_acc += a;
        records.push(StepRecord {
            step: i + 1,
            x_id: i,
            acc: a,
            nll: 1.0 - a,
            cum_acc,
            cum_nll: 0.0,
            n_ctx: 0,
            epoch_steps: 0,
            wall_ms: 0.0,
        });
    }
    PrequentialTrace {
        records,
        final_params: model(99),
        grad_steps: 0,
        trained_fingerprints: Default::default(),
    }
}

#[test]
fn average_all_ones_is_one() {
    let t = trace_from_accs(&[1.0, 1.0, 1.0]);
    let s = prequential_average(&t, MetricKind::Accuracy, None).unwrap();
    assert_eq!(s.value, 1.0);
}

#[test]
fn window_equal_to_n_matches_full_average() {
    let t = trace_from_accs(&[0.0, 1.0, 1.0, 0.0]);
    let full = prequential_average(&t, MetricKind::Accuracy, None).unwrap();
    let windowed = prequential_average(&t, MetricKind::Accuracy, Some(4)).unwrap();
    assert_eq!(full.value, windowed.value);
}

#[test]
fn tail_window_differs_from_full_average() {
    let t = trace_from_accs(&[0.0, 1.0, 1.0]);
    let tail = prequential_average(&t, MetricKind::Accuracy, Some(2)).unwrap();
    assert_eq!(tail.value, 1.0);
    let full = prequential_average(&t, MetricKind::Accuracy, None).unwrap();
    assert!((full.value - 2.0 / 3.0).abs() < 1e-15);
    assert!(matches!(
        prequential_average(&t, MetricKind::Accuracy, Some(4)),
        Err(Error::WindowTooLarge { .. })
    ));
}

#[test]
fn grid_of_one_wins_and_duplicates_break_to_first() {
    let base = model(8);
    let d = task(4, 9);
    let single = [HpConfig::new(1e-3, 1, 1)];
    let (best, _) =
        hp_select(&base, &d, &single, &template(), 21, MetricKind::Accuracy).unwrap();
    assert_eq!(best, single[0]);

    let dup = [HpConfig::new(1e-3, 1, 1), HpConfig::new(1e-3, 1, 1)];
    let (best, _) = hp_select(&base, &d, &dup, &template(), 21, MetricKind::Accuracy).unwrap();
    assert_eq!(best, dup[0]);
}

#[test]
fn selection_ties_break_to_lower_lr_then_fewer_epochs() {
    let base = model(9);
    let d = task(3, 10);
    // E = 0 everywhere: all traces identical, scores tie exactly.
    let grid = [
        HpConfig::new(3e-3, 0, 1),
        HpConfig::new(1e-3, 0, 1),
        HpConfig::new(1e-3, 0, 1),
    ];
    let (best, _) = hp_select(&base, &d, &grid, &template(), 23, MetricKind::Accuracy).unwrap();
    assert_eq!(best.lr, 1e-3);

    let nll_pick = hp_select(&base, &d, &grid, &template(), 23, MetricKind::Nll)
        .unwrap()
        .0;
    assert_eq!(nll_pick.lr, 1e-3);
}

#[test]
fn single_permutation_curve_equals_its_trace() {
    let base = model(10);
    let d = task(5, 11);
    let hp = HpConfig::new(1e-3, 1, 1);
    let curve = multi_permutation_curve(&base, &d, &hp, &template(), 1, 25).unwrap();

    // Reconstruct the single permuted run the curve is built from.
    let mut rng = Rng::derived(25, &[tags::PERMUTATION, 0]);
    let perm = rng.permutation(d.len());
    let permuted = Dataset {
        name: d.name.clone(),
        examples: perm.iter().map(|&i| d.examples[i].clone()).collect(),
        labels: d.labels.clone(),
    };
    let run_seed = crate::rng::derive_seed(25, &[tags::PERM_RUN, 0]);
    let trace = run_prequential(&base, &permuted, &hp, &template(), run_seed).unwrap();
    for (pos, r) in trace.records.iter().enumerate() {
        assert_eq!(curve.mean_acc[pos], r.acc);
        assert_eq!(curve.mean_nll[pos], r.nll);
        assert_eq!(curve.var_acc[pos], 0.0);
    }
}

#[test]
fn permutation_curve_variances_are_finite_and_nonnegative() {
    let base = model(11);
    let d = task(4, 12);
    let hp = HpConfig::new(1e-3, 0, 1);
    let curve = multi_permutation_curve(&base, &d, &hp, &template(), 3, 27).unwrap();
    for pos in 0..d.len() {
        assert!(curve.var_acc[pos] >= 0.0 && curve.var_acc[pos].is_finite());
        assert!(curve.var_nll[pos] >= 0.0 && curve.var_nll[pos].is_finite());
    }
}

#[test]
fn trace_csv_has_the_pinned_columns() {
    let base = model(12);
    let d = task(3, 13);
    let hp = HpConfig::new(1e-3, 1, 1);
    let trace = run_prequential(&base, &d, &hp, &template(), 29).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    export_trace_csv(&trace, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,x_id,acc,nll,cum_acc,cum_nll,n_ctx,epoch_steps"
    );
    assert_eq!(lines.count(), 3);
}
