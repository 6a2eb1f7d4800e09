//! Dense f64 matrix kernels.
//!
//! Every kernel accumulates each output element as an in-order sum over the
//! shared dimension, and the parallel variants split work by output row only.
//! Sequential and parallel paths therefore produce bit-identical results;
//! this fixed reduction order is part of the crate's determinism contract.

use crate::par::for_each_row;

/// Work threshold (m·k·n) below which row-parallelism is not worth the
/// scheduling overhead.
const PAR_MIN_WORK: usize = 1 << 15;

fn par_rows(m: usize, k: usize, n: usize) -> usize {
    if m * k * n >= PAR_MIN_WORK {
        2
    } else {
        usize::MAX
    }
}

/// c += a[m×k] · b[k×n]
pub fn matmul_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for_each_row(c, n, par_rows(m, k, n), |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cj, &bj) in row.iter_mut().zip(b_row) {
                *cj += aik * bj;
            }
        }
    });
}

/// c = a[m×k] · b[k×n]
pub fn matmul(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    c.fill(0.0);
    matmul_acc(c, a, b, m, k, n);
}

/// c += a[m×k] · b[n×k]ᵀ
pub fn matmul_nt_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for_each_row(c, n, par_rows(m, k, n), |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, cj) in row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                s += av * bv;
            }
            *cj += s;
        }
    });
}

/// c = a[m×k] · b[n×k]ᵀ
pub fn matmul_nt(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    c.fill(0.0);
    matmul_nt_acc(c, a, b, m, k, n);
}

/// c += a[k×m]ᵀ · b[k×n]
pub fn matmul_tn_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for_each_row(c, n, par_rows(m, k, n), |i, row| {
        for kk in 0..k {
            let aki = a[kk * m + i];
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cj, &bj) in row.iter_mut().zip(b_row) {
                *cj += aki * bj;
            }
        }
    });
}

/// c = a[k×m]ᵀ · b[k×n]
pub fn matmul_tn(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    c.fill(0.0);
    matmul_tn_acc(c, a, b, m, k, n);
}

/// Sequential reference matmul, always available regardless of features.
/// The bench suite compares this against the dispatching kernel above.
pub fn matmul_seq(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    c.fill(0.0);
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cj, &bj) in row.iter_mut().zip(b_row) {
                *cj += aik * bj;
            }
        }
    }
}
