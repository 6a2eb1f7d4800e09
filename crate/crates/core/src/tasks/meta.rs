//! Meta-pretraining stream: an endless supply of fresh in-context tasks.
//!
//! Each item samples a brand-new task instance from the `Meta` half of the
//! word space (see [`super::Namespace`]), draws K context examples plus one
//! target, and assembles a k-shot training sequence. Item i is a pure
//! function of (seed, i), so streams replay exactly and training can resume
//! from any step.
//!
//! Two task kinds are mixed. `Keyed` instances use arbitrary key words with
//! a fresh random key → label map, which is what forces the model to read
//! the map from the context. `Echo` instances embed the label word itself in
//! the query, which gives the model a copy-the-visible-label prior — the
//! bias that flipped-label evaluation tasks then violate.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::prompt::{build_training_sequence, PromptSequence, Template};
use crate::rng::{tags, Rng};

use super::{KeyedTask, Namespace, LABEL_WORDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaKind {
    Keyed,
    Echo,
}

/// Task-family specification: which generator kinds (duplicates act as
/// mixture weights), size ranges, and the K range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaFamily {
    pub kinds: Vec<MetaKind>,
    pub k_range: (usize, usize),
    pub n_keys_range: (usize, usize),
    pub n_classes_range: (usize, usize),
    pub noise_range: (usize, usize),
    pub max_seq_len: usize,
    pub template: Template,
}

impl Default for MetaFamily {
    fn default() -> Self {
        Self {
            kinds: vec![MetaKind::Keyed, MetaKind::Echo],
            k_range: (0, 4),
            n_keys_range: (2, 4),
            n_classes_range: (2, 3),
            noise_range: (1, 3),
            max_seq_len: 384,
            template: Template::default()
                .with_separator("\n\n")
                .with_query_suffix(" -> "),
        }
    }
}

fn sample_range(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    assert!(lo <= hi, "bad range ({lo}, {hi})");
    lo + rng.uniform(hi - lo + 1)
}

/// Infinite, replayable iterator of k-shot training sequences.
pub struct MetaStream {
    family: MetaFamily,
    seed: u64,
    next_index: u64,
}

impl MetaStream {
    pub fn new(family: MetaFamily, seed: u64) -> Self {
        Self {
            family,
            seed,
            next_index: 0,
        }
    }

    /// Resume emission at a given item index.
    pub fn starting_at(family: MetaFamily, seed: u64, index: u64) -> Self {
        Self {
            family,
            seed,
            next_index: index,
        }
    }

    /// The task instance and sequence for item `index`, independent of any
    /// other item.
    pub fn item(&self, index: u64) -> Result<(KeyedTask, PromptSequence)> {
        let f = &self.family;
        let mut rng = Rng::derived(self.seed, &[tags::META_ITEM, index]);
        let kind = f.kinds[rng.uniform(f.kinds.len())];
        let task = match kind {
            MetaKind::Keyed => {
                let n_classes = sample_range(&mut rng, f.n_classes_range);
                let n_keys = sample_range(&mut rng, f.n_keys_range).max(n_classes);
                let noise = sample_range(&mut rng, f.noise_range);
                KeyedTask::sample(&mut rng, Namespace::Meta, n_keys, n_classes, noise)?
            }
            MetaKind::Echo => {
                let noise = sample_range(&mut rng, f.noise_range);
                let pair = loop {
                    let idx = rng.sample_without_replacement(LABEL_WORDS.len(), 2);
                    let (a, b) = (LABEL_WORDS[idx[0]], LABEL_WORDS[idx[1]]);
                    if Namespace::Meta.admits_pair(a, b) {
                        break vec![a.to_string(), b.to_string()];
                    }
                };
                KeyedTask::echo(pair, noise)
            }
        };
        let mut k = sample_range(&mut rng, f.k_range);
        let examples: Vec<_> = (0..k + 1).map(|_| task.sample_example(&mut rng)).collect();
        // Shrink K if the assembled sequence would overflow; every emitted
        // sequence fits the model.
        loop {
            let ctx = &examples[examples.len() - 1 - k..examples.len() - 1];
            let target = examples.last().expect("at least one example");
            match build_training_sequence(ctx, target, &f.template, f.max_seq_len) {
                Ok(seq) => return Ok((task, seq)),
                Err(e) if k > 0 => {
                    let _ = e;
                    k -= 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl Iterator for MetaStream {
    type Item = Result<PromptSequence>;

    fn next(&mut self) -> Option<Self::Item> {
        let idx = self.next_index;
        self.next_index += 1;
        Some(self.item(idx).map(|(_, seq)| seq))
    }
}
