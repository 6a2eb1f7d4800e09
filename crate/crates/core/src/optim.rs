//! Optimizers: a memory-factored second-moment rule (default) and Adam.
//!
//! The factored rule keeps exponential moving averages of the row and column
//! means of the squared gradient for matrices and reconstructs the second
//! moment as their rank-1 outer product (exact whenever |g|² is rank 1);
//! vectors keep the full second moment. Updates are RMS-clipped at 1.0 and
//! there is no schedule, weight decay, or warmup — the learning rate comes
//! verbatim from the hyperparameter grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GradMap, Parameters};
use crate::numerics::Tensor;

pub const FACTORED_EPS: f64 = 1e-30;
pub const FACTORED_CLIP: f64 = 1.0;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adafactor,
    Adam,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimizerKind::Adafactor => write!(f, "adafactor"),
            OptimizerKind::Adam => write!(f, "adam"),
        }
    }
}

#[derive(Debug, Clone)]
enum Slot {
    /// Row/column EMAs of the squared gradient (matrices).
    Factored { row: Vec<f64>, col: Vec<f64> },
    /// Full second-moment EMA (vectors, scalars).
    Full { v: Vec<f64> },
    /// First and second moments (Adam).
    Moments { m: Vec<f64>, v: Vec<f64> },
}

/// Per-parameter accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    slots: BTreeMap<String, Slot>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            step: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every gradient entry. Touches only parameters in the
    /// trainable set; a non-finite gradient aborts before any mutation.
    pub fn step(&mut self, params: &mut Parameters, grads: &GradMap, lr: f64) -> Result<()> {
        assert!(lr > 0.0, "learning rate must be positive");
        let t = self.step + 1;
        for (name, grad) in grads {
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFiniteGrad {
                    name: name.clone(),
                    step: t,
                });
            }
            if !params.is_trainable(name) {
                return Err(Error::Config(format!(
                    "gradient supplied for non-trainable parameter `{name}`"
                )));
            }
        }
        self.step = t;
        for (name, grad) in grads {
            let shape = params.get(name).shape.clone();
            let update = match self.kind {
                OptimizerKind::Adafactor => self.factored_update(name, grad, &shape, t),
                OptimizerKind::Adam => self.adam_update(name, grad, t),
            };
            let data = &mut params.get_mut(name).data;
            for (p, u) in data.iter_mut().zip(&update) {
                *p -= lr * u;
            }
            debug_assert!(data.iter().all(|v| v.is_finite()), "`{name}` went non-finite");
        }
        Ok(())
    }

    fn decay(t: u64) -> f64 {
        1.0 - (t as f64).powf(-0.8)
    }

    fn factored_update(&mut self, name: &str, grad: &[f64], shape: &[usize], t: u64) -> Vec<f64> {
        let beta = Self::decay(t);
        let factored = shape.len() == 2 && shape[0] > 1 && shape[1] > 1;
        let mut update: Vec<f64>;
        if factored {
            let (rows, cols) = (shape[0], shape[1]);
            let slot = self.slots.entry(name.to_string()).or_insert_with(|| Slot::Factored {
                row: vec![0.0; rows],
                col: vec![0.0; cols],
            });
            let Slot::Factored { row, col } = slot else {
                panic!("slot kind changed for `{name}`")
            };
            // EMAs of row/column means of g² + ε.
            for i in 0..rows {
                let mean: f64 = grad[i * cols..(i + 1) * cols]
                    .iter()
                    .map(|g| g * g + FACTORED_EPS)
                    .sum::<f64>()
                    / cols as f64;
                row[i] = beta * row[i] + (1.0 - beta) * mean;
            }
            for j in 0..cols {
                let mean: f64 = (0..rows)
                    .map(|i| {
                        let g = grad[i * cols + j];
                        g * g + FACTORED_EPS
                    })
                    .sum::<f64>()
                    / rows as f64;
                col[j] = beta * col[j] + (1.0 - beta) * mean;
            }
            let row_mean: f64 = row.iter().sum::<f64>() / rows as f64;
            update = vec![0.0; grad.len()];
            for i in 0..rows {
                let ri = row[i] / row_mean;
                for j in 0..cols {
                    update[i * cols + j] = grad[i * cols + j] / (ri * col[j]).sqrt();
                }
            }
        } else {
            let slot = self
                .slots
                .entry(name.to_string())
                .or_insert_with(|| Slot::Full {
                    v: vec![0.0; grad.len()],
                });
            let Slot::Full { v } = slot else {
                panic!("slot kind changed for `{name}`")
            };
            for (vi, g) in v.iter_mut().zip(grad) {
                *vi = beta * *vi + (1.0 - beta) * (g * g + FACTORED_EPS);
            }
            update = grad.iter().zip(v.iter()).map(|(g, vi)| g / vi.sqrt()).collect();
        }
        // Clip the update at RMS 1.0.
        let rms = (update.iter().map(|u| u * u).sum::<f64>() / update.len() as f64).sqrt();
        if rms > FACTORED_CLIP {
            let s = FACTORED_CLIP / rms;
            for u in update.iter_mut() {
                *u *= s;
            }
        }
        update
    }

    fn adam_update(&mut self, name: &str, grad: &[f64], t: u64) -> Vec<f64> {
        let slot = self
            .slots
            .entry(name.to_string())
            .or_insert_with(|| Slot::Moments {
                m: vec![0.0; grad.len()],
                v: vec![0.0; grad.len()],
            });
        let Slot::Moments { m, v } = slot else {
            panic!("slot kind changed for `{name}`")
        };
        let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
        let mut update = vec![0.0; grad.len()];
        for i in 0..grad.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            update[i] = m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        update
    }

    /// Accumulators as named tensors for checkpointing.
    pub fn to_named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (name, slot) in &self.slots {
            match slot {
                Slot::Factored { row, col } => {
                    out.push((
                        format!("opt.row.{name}"),
                        Tensor::new(vec![row.len()], row.clone()),
                    ));
                    out.push((
                        format!("opt.col.{name}"),
                        Tensor::new(vec![col.len()], col.clone()),
                    ));
                }
                Slot::Full { v } => {
                    out.push((format!("opt.v.{name}"), Tensor::new(vec![v.len()], v.clone())));
                }
                Slot::Moments { m, v } => {
                    out.push((format!("opt.m.{name}"), Tensor::new(vec![m.len()], m.clone())));
                    out.push((format!("opt.v.{name}"), Tensor::new(vec![v.len()], v.clone())));
                }
            }
        }
        out
    }

    /// Rebuild from checkpointed tensors (inverse of [`Self::to_named_tensors`]).
    pub fn from_named_tensors(
        kind: OptimizerKind,
        step: u64,
        tensors: &BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let mut slots: BTreeMap<String, Slot> = BTreeMap::new();
        for (full, tensor) in tensors {
            let Some(rest) = full.strip_prefix("opt.") else {
                continue;
            };
            let (tag, name) = rest
                .split_once('.')
                .ok_or_else(|| Error::Checkpoint(format!("bad optimizer tensor `{full}`")))?;
            let data = tensor.data.clone();
            match (kind, tag) {
                (OptimizerKind::Adafactor, "row") => match slots
                    .entry(name.to_string())
                    .or_insert_with(|| Slot::Factored { row: vec![], col: vec![] })
                {
                    Slot::Factored { row, .. } => *row = data,
                    _ => return Err(Error::Checkpoint(format!("slot mismatch for `{name}`"))),
                },
                (OptimizerKind::Adafactor, "col") => match slots
                    .entry(name.to_string())
                    .or_insert_with(|| Slot::Factored { row: vec![], col: vec![] })
                {
                    Slot::Factored { col, .. } => *col = data,
                    _ => return Err(Error::Checkpoint(format!("slot mismatch for `{name}`"))),
                },
                (OptimizerKind::Adafactor, "v") => {
                    slots.insert(name.to_string(), Slot::Full { v: data });
                }
                (OptimizerKind::Adam, "m") => match slots
                    .entry(name.to_string())
                    .or_insert_with(|| Slot::Moments { m: vec![], v: vec![] })
                {
                    Slot::Moments { m, .. } => *m = data,
                    _ => return Err(Error::Checkpoint(format!("slot mismatch for `{name}`"))),
                },
                (OptimizerKind::Adam, "v") => match slots
                    .entry(name.to_string())
                    .or_insert_with(|| Slot::Moments { m: vec![], v: vec![] })
                {
                    Slot::Moments { v, .. } => *v = data,
                    _ => return Err(Error::Checkpoint(format!("slot mismatch for `{name}`"))),
                },
                _ => {
                    return Err(Error::Checkpoint(format!(
                        "optimizer tensor `{full}` does not match kind {kind}"
                    )))
                }
            }
        }
        Ok(Self { kind, step, slots })
    }
}
