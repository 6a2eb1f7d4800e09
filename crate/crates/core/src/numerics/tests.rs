use super::*;
use crate::check::{finite_diff_grad, max_grad_rel_err, rel_err};
use crate::rng::Rng;

fn randn(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

#[test]
fn matmul_identity_case() {
    let mut tape = Tape::new();
    let eye = tape.leaf(&Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
    let b = tape.leaf(&Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    let c = tape.matmul(eye, b).unwrap();
    assert_eq!(tape.data(c), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_hand_computed() {
    let mut tape = Tape::new();
    let a = tape.leaf(&Tensor::new(vec![1, 2], vec![1.0, 2.0]));
    let b = tape.leaf(&Tensor::new(vec![2, 1], vec![3.0, 4.0]));
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.data(c), &[11.0]);
}

#[test]
fn matmul_shape_mismatch_reports_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.leaf(&Tensor::zeros(vec![2, 3]));
    let b = tape.leaf(&Tensor::zeros(vec![4, 2]));
    match tape.matmul(a, b) {
        Err(Error::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![4, 2]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

/// Random 3×4 · 4×2; loss routes the product through gelu so the gradient
/// w.r.t. both factors is non-trivial. Finite differences vs backward.
#[test]
fn matmul_backward_matches_finite_differences() {
    let mut rng = Rng::from_seed(17);
    let a_data = randn(&mut rng, 12);
    let b_data = randn(&mut rng, 8);

    let eval = |a_data: &[f64], b_data: &[f64]| -> f64 {
        let mut tape = Tape::new();
        let a = tape.leaf_owned(a_data.to_vec(), vec![3, 4], false);
        let b = tape.leaf_owned(b_data.to_vec(), vec![4, 2], false);
        let c = tape.matmul(a, b).unwrap();
        let g = tape.gelu(c);
        let s = tape.sum(g);
        tape.scalar_value(s)
    };

    let mut tape = Tape::new();
    let a = tape.leaf_owned(a_data.clone(), vec![3, 4], true);
    let b = tape.leaf_owned(b_data.clone(), vec![4, 2], true);
    let c = tape.matmul(a, b).unwrap();
    let g = tape.gelu(c);
    let loss = tape.sum(g);
    tape.backward(loss).unwrap();

    let mut ad = a_data.clone();
    let fd_a = finite_diff_grad(&mut ad, |p| eval(p, &b_data));
    let mut bd = b_data.clone();
    let fd_b = finite_diff_grad(&mut bd, |p| eval(&a_data, p));

    assert!(max_grad_rel_err(tape.grad(a).unwrap(), &fd_a, 1e-3) < 1e-6);
    assert!(max_grad_rel_err(tape.grad(b).unwrap(), &fd_b, 1e-3) < 1e-6);
}

#[test]
fn masked_ce_uniform_logits_is_ln_vocab() {
    let mut tape = Tape::new();
    let logits = tape.leaf(&Tensor::zeros(vec![3, 4]));
    let loss = tape
        .softmax_cross_entropy_masked(logits, &[1, 2, 3], &[0, 1, 0])
        .unwrap();
    assert!((tape.scalar_value(loss) - 4.0f64.ln()).abs() < 1e-12);
}

#[test]
fn masked_ce_all_zero_mask_is_error() {
    let mut tape = Tape::new();
    let logits = tape.leaf(&Tensor::zeros(vec![2, 4]));
    assert!(matches!(
        tape.softmax_cross_entropy_masked(logits, &[0, 0], &[0, 0]),
        Err(Error::InvalidMask)
    ));
}

/// Independent oracle: direct log-sum-exp formula coded without the tape.
fn ce_oracle(logits: &[f64], rows: usize, vocab: usize, targets: &[u32], mask: &[u8]) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for t in 0..rows {
        if mask[t] == 0 {
            continue;
        }
        let row = &logits[t * vocab..(t + 1) * vocab];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[targets[t] as usize];
        n += 1.0;
    }
    total / n
}

#[test]
fn masked_ce_value_and_grad_match_direct_formula_oracle() {
    let mut rng = Rng::from_seed(23);
    let (rows, vocab) = (5, 7);
    let logits_data = randn(&mut rng, rows * vocab);
    let targets: Vec<u32> = (0..rows).map(|_| rng.uniform(vocab) as u32).collect();
    let mask = vec![1u8, 0, 1, 1, 0];

    let mut tape = Tape::new();
    let logits = tape.leaf_owned(logits_data.clone(), vec![rows, vocab], true);
    let loss = tape
        .softmax_cross_entropy_masked(logits, &targets, &mask)
        .unwrap();
    let value = tape.scalar_value(loss);
    tape.backward(loss).unwrap();

    let oracle_value = ce_oracle(&logits_data, rows, vocab, &targets, &mask);
    assert!(rel_err(value, oracle_value, 1e-8) < 1e-8);

    let mut ld = logits_data.clone();
    let fd = finite_diff_grad(&mut ld, |p| ce_oracle(p, rows, vocab, &targets, &mask));
    assert!(max_grad_rel_err(tape.grad(logits).unwrap(), &fd, 1e-3) < 1e-6);
}

#[test]
fn masked_ce_shift_invariance() {
    let mut rng = Rng::from_seed(31);
    let (rows, vocab) = (4, 9);
    let logits_data = randn(&mut rng, rows * vocab);
    let targets: Vec<u32> = (0..rows).map(|_| rng.uniform(vocab) as u32).collect();
    let mask = vec![1u8; rows];

    let eval = |data: Vec<f64>| {
        let mut tape = Tape::new();
        let l = tape.leaf_owned(data, vec![rows, vocab], false);
        let loss = tape.softmax_cross_entropy_masked(l, &targets, &mask).unwrap();
        tape.scalar_value(loss)
    };

    let base = eval(logits_data.clone());
    // Add a per-row constant.
    let mut shifted = logits_data;
    for t in 0..rows {
        let c = (t as f64 + 1.0) * 3.7;
        for v in shifted[t * vocab..(t + 1) * vocab].iter_mut() {
            *v += c;
        }
    }
    let moved = eval(shifted);
    assert!((base - moved).abs() < 1e-10, "shift changed loss by {}", base - moved);
}

#[test]
fn masked_ce_unmasked_rows_get_exactly_zero_grad() {
    let mut rng = Rng::from_seed(37);
    let (rows, vocab) = (4, 5);
    let logits_data = randn(&mut rng, rows * vocab);
    let mut tape = Tape::new();
    let logits = tape.leaf_owned(logits_data, vec![rows, vocab], true);
    let loss = tape
        .softmax_cross_entropy_masked(logits, &[1, 1, 1, 1], &[0, 1, 0, 1])
        .unwrap();
    tape.backward(loss).unwrap();
    let g = tape.grad(logits).unwrap();
    for t in [0usize, 2] {
        for j in 0..vocab {
            assert_eq!(g[t * vocab + j], 0.0);
        }
    }
}

#[test]
fn rms_norm_unit_input() {
    let mut tape = Tape::new();
    let x = tape.leaf(&Tensor::full(vec![1, 4], 1.0));
    let g = tape.leaf(&Tensor::full(vec![4], 1.0));
    let y = tape.rms_norm(x, g).unwrap();
    for &v in tape.data(y) {
        assert!((v - 1.0).abs() < 1e-5); // ε pulls slightly below 1
    }
}

#[test]
fn rms_norm_zero_gain_gives_zeros() {
    let mut rng = Rng::from_seed(41);
    let mut tape = Tape::new();
    let x = tape.leaf_owned(randn(&mut rng, 8), vec![2, 4], false);
    let g = tape.leaf(&Tensor::zeros(vec![4]));
    let y = tape.rms_norm(x, g).unwrap();
    assert!(tape.data(y).iter().all(|&v| v == 0.0));
}

#[test]
fn rms_norm_backward_matches_finite_differences() {
    let mut rng = Rng::from_seed(43);
    let (rows, cols) = (3, 5);
    let x_data = randn(&mut rng, rows * cols);
    let g_data: Vec<f64> = randn(&mut rng, cols);

    let eval = |x: &[f64], g: &[f64]| {
        let mut tape = Tape::new();
        let xt = tape.leaf_owned(x.to_vec(), vec![rows, cols], false);
        let gt = tape.leaf_owned(g.to_vec(), vec![cols], false);
        let y = tape.rms_norm(xt, gt).unwrap();
        let s = tape.sum(y);
        tape.scalar_value(s)
    };

    let mut tape = Tape::new();
    let xt = tape.leaf_owned(x_data.clone(), vec![rows, cols], true);
    let gt = tape.leaf_owned(g_data.clone(), vec![cols], true);
    let y = tape.rms_norm(xt, gt).unwrap();
    let loss = tape.sum(y);
    tape.backward(loss).unwrap();

    let mut xd = x_data.clone();
    let fd_x = finite_diff_grad(&mut xd, |p| eval(p, &g_data));
    let mut gd = g_data.clone();
    let fd_g = finite_diff_grad(&mut gd, |p| eval(&x_data, p));

    assert!(max_grad_rel_err(tape.grad(xt).unwrap(), &fd_x, 1e-3) < 1e-5);
    assert!(max_grad_rel_err(tape.grad(gt).unwrap(), &fd_g, 1e-3) < 1e-5);
}

#[test]
fn backward_of_sum_is_ones() {
    let mut tape = Tape::new();
    let theta = tape.leaf(&Tensor::new(vec![2, 3], vec![0.1; 6]).with_grad());
    let loss = tape.sum(theta);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(theta).unwrap(), &[1.0; 6]);
}

#[test]
fn backward_of_zero_scaled_loss_is_zeros() {
    let mut rng = Rng::from_seed(47);
    let mut tape = Tape::new();
    let theta = tape.leaf_owned(randn(&mut rng, 6), vec![2, 3], true);
    let g = tape.leaf(&Tensor::full(vec![3], 1.0));
    let y = tape.rms_norm(theta, g).unwrap();
    let s = tape.sum(y);
    let loss = tape.scale(s, 0.0);
    tape.backward(loss).unwrap();
    assert!(tape.grad(theta).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_twice_is_error() {
    let mut tape = Tape::new();
    let theta = tape.leaf(&Tensor::full(vec![1], 1.0).with_grad());
    let loss = tape.sum(theta);
    tape.backward(loss).unwrap();
    assert!(matches!(tape.backward(loss), Err(Error::BackwardAlreadyRan)));
}

#[test]
fn backward_non_scalar_is_error() {
    let mut tape = Tape::new();
    let theta = tape.leaf(&Tensor::full(vec![2, 2], 1.0).with_grad());
    assert!(matches!(
        tape.backward(theta),
        Err(Error::NonScalarLoss { .. })
    ));
}

#[test]
fn backward_detached_is_error() {
    let mut tape = Tape::new();
    let a = tape.leaf(&Tensor::full(vec![2, 2], 1.0)); // requires_grad = false
    let s = tape.sum(a);
    assert!(matches!(tape.backward(s), Err(Error::DetachedGraph)));
}

#[test]
fn causal_softmax_rows_sum_to_one_and_upper_is_zero() {
    let mut rng = Rng::from_seed(53);
    let n = 6;
    let mut tape = Tape::new();
    let a = tape.leaf_owned(randn(&mut rng, n * n), vec![n, n], false);
    let p = tape.causal_softmax(a).unwrap();
    let data = tape.data(p);
    for i in 0..n {
        let row_sum: f64 = data[i * n..i * n + i + 1].iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-12);
        for j in i + 1..n {
            assert_eq!(data[i * n + j], 0.0);
        }
    }
}

/// Every differentiable primitive, finite-difference checked on 10 random
/// instances each (step 1e-5, tolerance 1e-4 per the crate contract; the
/// simple ops hold to much tighter bounds).
#[test]
fn all_primitives_pass_fd_on_ten_random_instances() {
    for seed in 0..10u64 {
        let mut rng = Rng::from_seed(1000 + seed);
        let (t, d) = (4, 6);
        let x_data = randn(&mut rng, t * d);

        // Composite graph touching gather, matmul, matmul_nt, slice, concat,
        // causal softmax, rms_norm, gelu, scale, add, masked CE.
        let vocab = 11usize;
        let table_data = randn(&mut rng, vocab * d);
        let w_data = randn(&mut rng, d * d);
        let gain_data: Vec<f64> = (0..d).map(|_| 1.0 + 0.1 * rng.normal()).collect();
        let ids: Vec<u32> = (0..t).map(|_| rng.uniform(vocab) as u32).collect();
        let targets: Vec<u32> = (0..t).map(|_| rng.uniform(vocab) as u32).collect();
        let mask: Vec<u8> = (0..t).map(|i| u8::from(i % 2 == 0)).collect();
        let unembed_data = randn(&mut rng, d * vocab);

        let eval = |table: &[f64], w: &[f64], gain: &[f64], x: &[f64], unembed: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let table = tape.leaf_owned(table.to_vec(), vec![vocab, d], false);
            let w = tape.leaf_owned(w.to_vec(), vec![d, d], false);
            let gain = tape.leaf_owned(gain.to_vec(), vec![d], false);
            let x = tape.leaf_owned(x.to_vec(), vec![t, d], false);
            let unembed = tape.leaf_owned(unembed.to_vec(), vec![d, vocab], false);
            let loss = composite(&mut tape, table, w, gain, x, unembed, &ids, &targets, &mask);
            tape.scalar_value(loss)
        };

        let mut tape = Tape::new();
        let table = tape.leaf_owned(table_data.clone(), vec![vocab, d], true);
        let w = tape.leaf_owned(w_data.clone(), vec![d, d], true);
        let gain = tape.leaf_owned(gain_data.clone(), vec![d], true);
        let x = tape.leaf_owned(x_data.clone(), vec![t, d], true);
        let unembed = tape.leaf_owned(unembed_data.clone(), vec![d, vocab], true);
        let loss = composite(&mut tape, table, w, gain, x, unembed, &ids, &targets, &mask);
        tape.backward(loss).unwrap();

        let checks: Vec<(&str, TensorId, Vec<f64>)> = {
            let mut v = Vec::new();
            let mut td = table_data.clone();
            v.push((
                "table",
                table,
                finite_diff_grad(&mut td, |p| {
                    eval(p, &w_data, &gain_data, &x_data, &unembed_data)
                }),
            ));
            let mut wd = w_data.clone();
            v.push((
                "w",
                w,
                finite_diff_grad(&mut wd, |p| {
                    eval(&table_data, p, &gain_data, &x_data, &unembed_data)
                }),
            ));
            let mut gd = gain_data.clone();
            v.push((
                "gain",
                gain,
                finite_diff_grad(&mut gd, |p| {
                    eval(&table_data, &w_data, p, &x_data, &unembed_data)
                }),
            ));
            let mut xd = x_data.clone();
            v.push((
                "x",
                x,
                finite_diff_grad(&mut xd, |p| {
                    eval(&table_data, &w_data, &gain_data, p, &unembed_data)
                }),
            ));
            let mut ud = unembed_data.clone();
            v.push((
                "unembed",
                unembed,
                finite_diff_grad(&mut ud, |p| {
                    eval(&table_data, &w_data, &gain_data, &x_data, p)
                }),
            ));
            v
        };
        for (name, id, fd) in checks {
            let err = max_grad_rel_err(tape.grad(id).unwrap(), &fd, 1e-3);
            assert!(err < 1e-4, "seed {seed}, {name}: rel err {err}");
        }
    }
}

/// Shared graph for the FD sweep: embeds, mixes, normalizes, attends,
/// projects, and scores — every primitive on one path.
#[allow(clippy::too_many_arguments)]
fn composite(
    tape: &mut Tape,
    table: TensorId,
    w: TensorId,
    gain: TensorId,
    x: TensorId,
    unembed: TensorId,
    ids: &[u32],
    targets: &[u32],
    mask: &[u8],
) -> TensorId {
    let emb = tape.gather(table, ids).unwrap();
    let h0 = tape.add(emb, x).unwrap();
    let h = tape.rms_norm(h0, gain).unwrap();
    let q = tape.matmul(h, w).unwrap();
    let d = tape.shape(q)[1];
    let half = d / 2;
    let q1 = tape.slice_cols(q, 0, half).unwrap();
    let q2 = tape.slice_cols(q, half, d - half).unwrap();
    let scores = tape.matmul_nt(q1, q1).unwrap();
    let scaled = tape.scale(scores, 1.0 / (half as f64).sqrt());
    let probs = tape.causal_softmax(scaled).unwrap();
    let ctx = tape.matmul(probs, q1).unwrap();
    let joined = tape.concat_cols(&[ctx, q2]).unwrap();
    let act = tape.gelu(joined);
    let out = tape.add(act, h).unwrap();
    let logits = tape.matmul(out, unembed).unwrap();
    tape.softmax_cross_entropy_masked(logits, targets, mask)
        .unwrap()
}

#[test]
fn forward_is_bit_deterministic() {
    let mut rng = Rng::from_seed(61);
    let (m, k, n) = (48, 64, 40); // crosses the parallel threshold
    let a = randn(&mut rng, m * k);
    let b = randn(&mut rng, k * n);
    let run = || {
        let mut tape = Tape::new();
        let at = tape.leaf_owned(a.clone(), vec![m, k], false);
        let bt = tape.leaf_owned(b.clone(), vec![k, n], false);
        let c = tape.matmul(at, bt).unwrap();
        let g = tape.gelu(c);
        tape.data(g).to_vec()
    };
    let first = run();
    let second = run();
    for (x, y) in first.iter().zip(&second) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}
