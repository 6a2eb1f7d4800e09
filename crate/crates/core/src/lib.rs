//! Desk-scale laboratory for adapting a small autoregressive transformer to
//! downstream tasks: k-shot prompt fine-tuning, in-context evaluation, and
//! prequential training with grid-based hyperparameter selection, all on
//! synthetic tasks with exact oracles.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`] — reverse-mode autodiff over dense f64 tensors
//! - [`model`] — tiny decoder-only causal transformer, optional LoRA adapters
//! - [`optim`] — Adafactor-style factored optimizer and Adam
//! - [`prompt`] — byte-level tokenizer and k-shot sequence builders
//! - [`tasks`] — seeded task generators with oracles, label variants, splits
//! - [`strategies`] — ICL-only / FT-only / ICL+FT predictors and evaluation
//! - [`prequential`] — interleaved next-step evaluation and training
//! - [`runner`] — experiment orchestration, CSV emission, CLI plumbing
//!
//! With the `parallel` feature (default) inner kernels and job fan-out run on
//! rayon; results are bit-identical to the sequential build.

pub mod check;
pub mod error;
pub mod numerics;
pub mod par;
pub mod checkpoint;
pub mod model;
pub mod optim;
pub mod prompt;
pub mod prequential;
pub mod rng;
pub mod runner;
pub mod strategies;
pub mod tasks;

pub use error::{Error, Result};
