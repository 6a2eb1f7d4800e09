//! Synthetic task generators with exact oracles, label-manipulation
//! variants, deterministic seeded splits, and a line-JSON task-file format.
//!
//! Word spaces are partitioned by construction: every generated key word is
//! assigned to the `Meta` or `Eval` namespace by hash parity, and the
//! meta-pretraining stream (see [`meta`]) only ever draws from the `Meta`
//! half while the public generators draw from `Eval`. Held-out evaluation
//! tasks can therefore never collide with anything the base model saw.

pub mod meta;

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::Example;
use crate::rng::{fnv1a, tags, Rng};

/// Closed label lexicon shared by all classification generators. Labels are
/// capitalized so they can never collide with (lowercase) keys or filler.
pub const LABEL_WORDS: [&str; 12] = [
    "Red", "Blue", "Gold", "Teal", "Jade", "Plum", "Cyan", "Onyx", "Ruby", "Sage", "Iris", "Dune",
];

/// Which half of the word space a generator may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Namespace {
    Meta,
    Eval,
}

impl Namespace {
    fn admits(self, word: &str) -> bool {
        let even = fnv1a(word.as_bytes()) & 1 == 0;
        match self {
            Namespace::Meta => even,
            Namespace::Eval => !even,
        }
    }

    /// Unordered label pairs are partitioned the same way, keyed by the
    /// sorted pair.
    pub fn admits_pair(self, a: &str, b: &str) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut buf = Vec::with_capacity(lo.len() + hi.len() + 1);
        buf.extend_from_slice(lo.as_bytes());
        buf.push(b'|');
        buf.extend_from_slice(hi.as_bytes());
        let even = fnv1a(&buf) & 1 == 0;
        match self {
            Namespace::Meta => even,
            Namespace::Eval => !even,
        }
    }
}

/// Draw a namespace-admissible key word.
pub fn sample_key(rng: &mut Rng, ns: Namespace) -> String {
    loop {
        let w = rng.word(4, 7);
        if ns.admits(&w) {
            return w;
        }
    }
}

/// Ordered examples plus an optional closed label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Every y must belong to the label set, when one is declared.
    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            for (i, ex) in self.examples.iter().enumerate() {
                if !labels.contains(&ex.y) {
                    return Err(Error::InvalidTask(format!(
                        "example {i}: response `{}` not in label set {labels:?}",
                        ex.y
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Seeded shuffle; the first `n_train` indices form the train set and the
/// *last* `n_test` the test set. For a fixed seed the permutation does not
/// depend on the requested sizes, so smaller train sets are prefixes of
/// larger ones and the test set is identical across budgets.
pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if spec.n_train + spec.n_test > d.len() {
        return Err(Error::SplitTooLarge {
            n_train: spec.n_train,
            n_test: spec.n_test,
            len: d.len(),
        });
    }
    let mut rng = Rng::derived(spec.seed, &[tags::SPLIT]);
    let perm = rng.permutation(d.len());
    let pick = |indices: &[usize], suffix: &str| Dataset {
        name: format!("{}-{suffix}", d.name),
        examples: indices.iter().map(|&i| d.examples[i].clone()).collect(),
        labels: d.labels.clone(),
    };
    let train = pick(&perm[..spec.n_train], "train");
    let test = pick(&perm[d.len() - spec.n_test..], "test");
    Ok((train, test))
}

// ---- parity ----

/// Running parity of a space-separated bit string: one word per digit,
/// `Even`/`Odd` for the cumulative parity after that digit.
pub fn parity_oracle(x: &str) -> Result<String> {
    let mut ones = 0u32;
    let mut words = Vec::new();
    for tok in x.split_whitespace() {
        match tok {
            "0" => {}
            "1" => ones += 1,
            other => {
                return Err(Error::InvalidTask(format!(
                    "parity input must be 0/1 digits, got `{other}`"
                )))
            }
        }
        words.push(if ones % 2 == 0 { "Even" } else { "Odd" });
    }
    if words.is_empty() {
        return Err(Error::InvalidTask("empty parity input".into()));
    }
    Ok(words.join(" "))
}

/// Unique random bit strings of length `n_bits` with their running-parity
/// responses.
pub fn gen_parity(n_bits: usize, n_examples: usize, seed: u64) -> Result<Dataset> {
    if !(1..=24).contains(&n_bits) {
        return Err(Error::InvalidTask(format!(
            "n_bits must be in 1..=24, got {n_bits}"
        )));
    }
    if n_examples > 1usize << n_bits {
        return Err(Error::InvalidTask(format!(
            "cannot draw {n_examples} unique {n_bits}-bit strings"
        )));
    }
    let mut rng = Rng::derived(seed, &[tags::TASK_GEN, n_bits as u64]);
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    let mut examples = Vec::with_capacity(n_examples);
    while examples.len() < n_examples {
        let bits = (rng.next_u64() & ((1u64 << n_bits) - 1)) as u32;
        if !seen.insert(bits) {
            continue;
        }
        let x: String = (0..n_bits)
            .rev()
            .map(|i| if bits >> i & 1 == 1 { "1" } else { "0" })
            .collect::<Vec<_>>()
            .join(" ");
        let y = parity_oracle(&x)?;
        examples.push(Example::new(x, y));
    }
    Ok(Dataset {
        name: format!("parity-{n_bits}"),
        examples,
        labels: None,
    })
}

// ---- keyed classification ----

/// A keyed-classification task instance: trigger words, a key → label map,
/// and the filler-word budget. This is both the generator configuration and
/// the oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyedTask {
    pub keys: Vec<String>,
    pub labels: Vec<String>,
    /// key index → label index
    pub map: Vec<usize>,
    pub noise_words: usize,
}

impl KeyedTask {
    /// Fresh task: namespace-partitioned keys, labels sampled from the
    /// lexicon, keys dealt round-robin to classes after a shuffle.
    pub fn sample(
        rng: &mut Rng,
        ns: Namespace,
        n_keys: usize,
        n_classes: usize,
        noise_words: usize,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidTask(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if n_keys < n_classes {
            return Err(Error::InvalidTask(format!(
                "need n_keys ≥ n_classes, got {n_keys} < {n_classes}"
            )));
        }
        if n_classes > LABEL_WORDS.len() {
            return Err(Error::InvalidTask(format!(
                "at most {} classes supported",
                LABEL_WORDS.len()
            )));
        }
        if n_keys > 26 {
            return Err(Error::InvalidTask(format!(
                "at most 26 keys per task, got {n_keys}"
            )));
        }
        // Keys carry pairwise-distinct final letters, so a fixed trailing
        // byte discriminates them near the response position.
        let mut keys: Vec<String> = Vec::with_capacity(n_keys);
        while keys.len() < n_keys {
            let k = sample_key(rng, ns);
            let last = k.as_bytes()[k.len() - 1];
            if !keys.iter().any(|existing| {
                existing == &k || existing.as_bytes()[existing.len() - 1] == last
            }) {
                keys.push(k);
            }
        }
        let label_idx = rng.sample_without_replacement(LABEL_WORDS.len(), n_classes);
        let labels: Vec<String> = label_idx.iter().map(|&i| LABEL_WORDS[i].to_string()).collect();
        // Deal shuffled keys round-robin so every class owns at least one key.
        let mut order: Vec<usize> = (0..n_keys).collect();
        rng.shuffle(&mut order);
        let mut map = vec![0usize; n_keys];
        for (slot, &key_idx) in order.iter().enumerate() {
            map[key_idx] = slot % n_classes;
        }
        Ok(Self {
            keys,
            labels,
            map,
            noise_words,
        })
    }

    /// Echo variant: the trigger words are the labels themselves under the
    /// identity map, so the correct answer is visible in the query.
    pub fn echo(labels: Vec<String>, noise_words: usize) -> Self {
        let n = labels.len();
        Self {
            keys: labels.clone(),
            labels,
            map: (0..n).collect(),
            noise_words,
        }
    }

    /// The label required for a query, or an error if the query does not
    /// contain exactly one key.
    pub fn oracle(&self, x: &str) -> Result<&str> {
        let mut found: Option<usize> = None;
        for word in x.split_whitespace() {
            if let Some(idx) = self.keys.iter().position(|k| k == word) {
                if found.is_some() {
                    return Err(Error::InvalidTask(format!("query contains two keys: `{x}`")));
                }
                found = Some(idx);
            }
        }
        match found {
            Some(idx) => Ok(&self.labels[self.map[idx]]),
            None => Err(Error::InvalidTask(format!("query contains no key: `{x}`"))),
        }
    }

    /// One example: a uniformly chosen class, one of its keys, embedded at a
    /// random position among filler words.
    pub fn sample_example(&self, rng: &mut Rng) -> Example {
        let class = rng.uniform(self.labels.len());
        let class_keys: Vec<usize> = (0..self.keys.len())
            .filter(|&k| self.map[k] == class)
            .collect();
        let key_idx = class_keys[rng.uniform(class_keys.len())];
        let mut words: Vec<String> = Vec::with_capacity(self.noise_words + 1);
        for _ in 0..self.noise_words {
            loop {
                let w = rng.word(3, 6);
                if !self.keys.contains(&w) {
                    words.push(w);
                    break;
                }
            }
        }
        let pos = rng.uniform(words.len() + 1);
        words.insert(pos, self.keys[key_idx].clone());
        Example::new(words.join(" "), self.labels[class].clone())
    }

    pub fn dataset(&self, name: &str, n_examples: usize, rng: &mut Rng) -> Dataset {
        let examples = (0..n_examples).map(|_| self.sample_example(rng)).collect();
        Dataset {
            name: name.to_string(),
            examples,
            labels: Some(self.labels.clone()),
        }
    }
}

/// Keyed classification in the `Eval` namespace; returns the dataset and its
/// oracle.
pub fn gen_keyed_classification_with_oracle(
    n_keys: usize,
    n_classes: usize,
    noise_len: usize,
    n_examples: usize,
    seed: u64,
) -> Result<(Dataset, KeyedTask)> {
    let mut rng = Rng::derived(seed, &[tags::TASK_GEN, 0x6b]);
    let task = KeyedTask::sample(&mut rng, Namespace::Eval, n_keys, n_classes, noise_len)?;
    let data = task.dataset(
        &format!("keyed-{n_keys}x{n_classes}"),
        n_examples,
        &mut rng,
    );
    Ok((data, task))
}

pub fn gen_keyed_classification(
    n_keys: usize,
    n_classes: usize,
    noise_len: usize,
    n_examples: usize,
    seed: u64,
) -> Result<Dataset> {
    gen_keyed_classification_with_oracle(n_keys, n_classes, noise_len, n_examples, seed)
        .map(|(d, _)| d)
}

/// Echo classification in the `Eval` namespace: a binary task whose label
/// pair is reserved (by hash parity) from the meta-pretraining stream, with
/// the identity map. Flipping it with [`flip_labels`] produces the
/// bias-violating variant.
pub fn gen_echo_classification_with_oracle(
    noise_len: usize,
    n_examples: usize,
    seed: u64,
) -> Result<(Dataset, KeyedTask)> {
    let mut rng = Rng::derived(seed, &[tags::TASK_GEN, 0x65]);
    let pair = loop {
        let idx = rng.sample_without_replacement(LABEL_WORDS.len(), 2);
        let (a, b) = (LABEL_WORDS[idx[0]], LABEL_WORDS[idx[1]]);
        if Namespace::Eval.admits_pair(a, b) {
            break vec![a.to_string(), b.to_string()];
        }
    };
    let task = KeyedTask::echo(pair, noise_len);
    let data = task.dataset("echo", n_examples, &mut rng);
    Ok((data, task))
}

pub fn gen_echo_classification(noise_len: usize, n_examples: usize, seed: u64) -> Result<Dataset> {
    gen_echo_classification_with_oracle(noise_len, n_examples, seed).map(|(d, _)| d)
}

// ---- label manipulation ----

/// Swap the two labels of a binary task in every response; the label list
/// itself keeps its order.
pub fn flip_labels(d: &Dataset) -> Result<Dataset> {
    let labels = d
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidTask("flip_labels requires a label set".into()))?;
    if labels.len() != 2 {
        return Err(Error::InvalidTask(format!(
            "flip_labels requires exactly 2 labels, got {}",
            labels.len()
        )));
    }
    let examples = d
        .examples
        .iter()
        .map(|ex| {
            let y = if ex.y == labels[0] {
                labels[1].clone()
            } else {
                labels[0].clone()
            };
            Example::new(ex.x.clone(), y)
        })
        .collect();
    Ok(Dataset {
        name: format!("{}-flipped", d.name),
        examples,
        labels: d.labels.clone(),
    })
}

/// Apply a uniformly random non-identity permutation of the label set to all
/// responses.
pub fn permute_labels(d: &Dataset, seed: u64) -> Result<Dataset> {
    let labels = d
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidTask("permute_labels requires a label set".into()))?;
    if labels.len() < 2 {
        return Err(Error::InvalidTask("need at least 2 labels to permute".into()));
    }
    let mut rng = Rng::derived(seed, &[tags::TASK_GEN, 0x70]);
    let perm = loop {
        let p = rng.permutation(labels.len());
        if p.iter().enumerate().any(|(i, &v)| i != v) {
            break p;
        }
    };
    let examples = d
        .examples
        .iter()
        .map(|ex| {
            let idx = labels
                .iter()
                .position(|l| l == &ex.y)
                .ok_or_else(|| Error::InvalidTask(format!("response `{}` not a label", ex.y)))?;
            Ok(Example::new(ex.x.clone(), labels[perm[idx]].clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: format!("{}-permuted", d.name),
        examples,
        labels: d.labels.clone(),
    })
}

// ---- task files ----

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ExampleLine {
    x: String,
    y: String,
}

/// UTF-8, one JSON object per line: an optional first line
/// `{"labels": [...]}` followed by `{"x": ..., "y": ...}` records.
pub fn save_task_file(path: &Path, d: &Dataset) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(labels) = &d.labels {
        let header = serde_json::to_string(&HeaderLine {
            labels: labels.clone(),
        })
        .expect("header serializes");
        writeln!(w, "{header}")?;
    }
    for ex in &d.examples {
        let line = serde_json::to_string(&ExampleLine {
            x: ex.x.clone(),
            y: ex.y.clone(),
        })
        .expect("example serializes");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_task_file(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let display = path.display().to_string();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".to_string());
    let mut labels: Option<Vec<String>> = None;
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::TaskFile {
            path: display.clone(),
            line: line_no,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::TaskFile {
                path: display.clone(),
                line: line_no,
                msg: format!("malformed JSON: {e}"),
            })?;
        if line_no == 1 && value.get("labels").is_some() {
            let header: HeaderLine = serde_json::from_value(value).map_err(|e| Error::TaskFile {
                path: display.clone(),
                line: line_no,
                msg: format!("bad labels header: {e}"),
            })?;
            labels = Some(header.labels);
            continue;
        }
        let record: ExampleLine = serde_json::from_value(value).map_err(|e| Error::TaskFile {
            path: display.clone(),
            line: line_no,
            msg: format!("expected fields x and y: {e}"),
        })?;
        if let Some(labels) = &labels {
            if !labels.contains(&record.y) {
                return Err(Error::TaskFile {
                    path: display.clone(),
                    line: line_no,
                    msg: format!("response `{}` not in declared labels", record.y),
                });
            }
        }
        examples.push(Example::new(record.x, record.y));
    }
    let d = Dataset {
        name,
        examples,
        labels,
    };
    d.validate()?;
    Ok(d)
}
