//! Deterministic randomness.
//!
//! All stochastic choices in the crate flow through [`Rng`], a ChaCha8 stream
//! seeded from a `u64`. Sub-seeds are derived with [`derive_seed`], a
//! splitmix64 mixing chain, so that independent sites (context sampling at
//! step i, permutation p, query q) each get their own stream and never share
//! or carry hidden state. This is what makes traces replayable and runs
//! resumable: item i of any seeded process depends only on (seed, i).

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream tags for seed derivation. Keeping them in one place avoids
/// accidental collisions between call sites.
pub mod tags {
    pub const PRED_CTX: u64 = 0x01;
    pub const TRAIN_CTX: u64 = 0x02;
    pub const PERMUTATION: u64 = 0x03;
    pub const PERM_RUN: u64 = 0x04;
    pub const QUERY_CTX: u64 = 0x05;
    pub const META_ITEM: u64 = 0x06;
    pub const SPLIT: u64 = 0x07;
    pub const TASK_GEN: u64 = 0x08;
    pub const INIT: u64 = 0x09;
    pub const LORA: u64 = 0x0a;
    pub const IID_SHUFFLE: u64 = 0x0b;
    pub const EVAL: u64 = 0x0c;
    pub const SEED_STREAM: u64 = 0x0d;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mix a base seed with a sequence of tags into a fresh sub-seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(base ^ 0x6a09e667f3bcc908);
    for &p in path {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}

/// Deterministic RNG with the small set of draws the crate needs.
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn derived(base: u64, path: &[u64]) -> Self {
        Self::from_seed(derive_seed(base, path))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)` via rejection sampling (unbiased).
    pub fn uniform(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform over empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Uniform in `[0, 1)` with 53 bits of entropy.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller. Self-contained so that sampled values
    /// are pinned by this crate, not by a distributions dependency.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let v = self.uniform_f64();
            if v > 0.0 {
                break v;
            }
        };
        let u2 = self.uniform_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.uniform(i + 1);
            slice.swap(i, j);
        }
    }

    /// A seeded permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    /// Sample `k` distinct indices from `0..n` uniformly without replacement,
    /// in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} from {n} without replacement");
        // Partial Fisher-Yates over an index vector.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.uniform(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    /// Random lowercase ASCII word with length in `[min_len, max_len]`.
    pub fn word(&mut self, min_len: usize, max_len: usize) -> String {
        let len = min_len + self.uniform(max_len - min_len + 1);
        (0..len)
            .map(|_| (b'a' + self.uniform(26) as u8) as char)
            .collect()
    }
}

/// Stable 64-bit FNV-1a hash. Used for example fingerprints and for the
/// hash-parity partition of generator word spaces; must never change.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
