//! Run configuration: structured TOML with explicit keys. Unknown keys are
//! rejected everywhere, so a typo in a grid name fails loudly instead of
//! silently running defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::prequential::{AdapterKind, HpConfig, MetricKind};
use crate::prompt::Template;
use crate::strategies::{StrategyKind, TrainMode};
use crate::tasks::{self, Dataset};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum TaskSpec {
    Parity {
        n_bits: usize,
        n_examples: usize,
        seed: u64,
        #[serde(default)]
        flip: bool,
    },
    Keyed {
        n_keys: usize,
        n_classes: usize,
        noise_len: usize,
        n_examples: usize,
        seed: u64,
        #[serde(default)]
        flip: bool,
    },
    Echo {
        noise_len: usize,
        n_examples: usize,
        seed: u64,
        #[serde(default)]
        flip: bool,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        flip: bool,
    },
}

impl TaskSpec {
    pub fn build(&self) -> Result<Dataset> {
        let (data, flip) = match self {
            TaskSpec::Parity {
                n_bits,
                n_examples,
                seed,
                flip,
            } => (tasks::gen_parity(*n_bits, *n_examples, *seed)?, *flip),
            TaskSpec::Keyed {
                n_keys,
                n_classes,
                noise_len,
                n_examples,
                seed,
                flip,
            } => (
                tasks::gen_keyed_classification(
                    *n_keys, *n_classes, *noise_len, *n_examples, *seed,
                )?,
                *flip,
            ),
            TaskSpec::Echo {
                noise_len,
                n_examples,
                seed,
                flip,
            } => (
                tasks::gen_echo_classification(*noise_len, *n_examples, *seed)?,
                *flip,
            ),
            TaskSpec::File { path, flip } => (tasks::load_task_file(path)?, *flip),
        };
        if flip {
            tasks::flip_labels(&data)
        } else {
            Ok(data)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lr: Vec<f64>,
    pub epochs: Vec<usize>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_adapter")]
    pub adapter: String,
    #[serde(default = "default_lora_rank")]
    pub lora_rank: usize,
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adafactor
}

fn default_adapter() -> String {
    "none".to_string()
}

fn default_lora_rank() -> usize {
    16
}

impl GridConfig {
    pub fn adapter_kind(&self) -> Result<AdapterKind> {
        match self.adapter.as_str() {
            "none" => Ok(AdapterKind::None),
            "lora" => Ok(AdapterKind::Lora(self.lora_rank)),
            other => Err(Error::Config(format!(
                "adapter must be `none` or `lora`, got `{other}`"
            ))),
        }
    }

    /// The cross product, with the context size filled in by the caller.
    pub fn expand(&self, k: usize) -> Result<Vec<HpConfig>> {
        if self.lr.is_empty() || self.epochs.is_empty() {
            return Err(Error::Config("grid lr/epochs must be non-empty".into()));
        }
        let adapter = self.adapter_kind()?;
        let mut out = Vec::with_capacity(self.lr.len() * self.epochs.len());
        for &lr in &self.lr {
            for &epochs in &self.epochs {
                let hp = HpConfig {
                    lr,
                    epochs,
                    k,
                    optimizer: self.optimizer,
                    adapter,
                };
                hp.validate()?;
                out.push(hp);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub strategies: Vec<String>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    pub n_test: usize,
    #[serde(default)]
    pub k_eval: Vec<usize>,
    #[serde(default)]
    pub k_train: usize,
    /// Defaults to accuracy for classification tasks, NLL otherwise.
    #[serde(default)]
    pub selection_metric: Option<MetricKind>,
    #[serde(default = "default_max_new")]
    pub max_new: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Resample the evaluation context per query (the default) rather than
    /// fixing one context per test pass.
    #[serde(default = "default_true")]
    pub resample_context: bool,
}

fn default_n_seeds() -> usize {
    5
}

fn default_max_new() -> usize {
    crate::strategies::DEFAULT_MAX_NEW
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidSection {
    pub lr: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskSpec,
    pub model: ModelSection,
    #[serde(default)]
    pub template: Template,
    pub run: RunSection,
    pub grid: GridConfig,
    #[serde(default)]
    pub iid: Option<IidSection>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.budgets.is_empty() {
            return Err(Error::Config("budgets must be non-empty".into()));
        }
        if self.run.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "budgets must be strictly ascending".into(),
            ));
        }
        if self.run.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be ≥ 1".into()));
        }
        if self.run.strategies.is_empty() {
            return Err(Error::Config("strategies must be non-empty".into()));
        }
        for s in &self.run.strategies {
            let kind = parse_strategy(s)?;
            if matches!(kind, StrategyKind::IclOnly) && self.run.k_eval.is_empty() {
                return Err(Error::Config(
                    "icl-only requires a non-empty k_eval sweep".into(),
                ));
            }
            if matches!(
                kind,
                StrategyKind::FtOnly(TrainMode::Iid) | StrategyKind::IclFt(TrainMode::Iid)
            ) && self.iid.is_none()
                && self.lr_epoch_grid_size() > 1
            {
                return Err(Error::Config(
                    "i.i.d. strategies provide no selection signal; pin [iid] lr/epochs \
                     or use a single-point grid"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    fn lr_epoch_grid_size(&self) -> usize {
        self.grid.lr.len() * self.grid.epochs.len()
    }

    /// Hyperparameters for the i.i.d. baseline: the pinned [iid] section, or
    /// the single grid point.
    pub fn iid_hp(&self, k: usize) -> Result<HpConfig> {
        if let Some(iid) = &self.iid {
            Ok(HpConfig {
                lr: iid.lr,
                epochs: iid.epochs,
                k,
                optimizer: self.grid.optimizer,
                adapter: self.grid.adapter_kind()?,
            })
        } else {
            let grid = self.grid.expand(k)?;
            if grid.len() != 1 {
                return Err(Error::Config(
                    "[iid] section required with a multi-point grid".into(),
                ));
            }
            Ok(grid[0])
        }
    }

    pub fn strategy_kinds(&self) -> Result<Vec<StrategyKind>> {
        self.run.strategies.iter().map(|s| parse_strategy(s)).collect()
    }

    /// Stable content hash of the whole configuration.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_strategy(s: &str) -> Result<StrategyKind> {
    match s {
        "icl-only" => Ok(StrategyKind::IclOnly),
        "ft-only" => Ok(StrategyKind::FtOnly(TrainMode::Prequential)),
        "icl-ft" => Ok(StrategyKind::IclFt(TrainMode::Prequential)),
        "ft-only-iid" => Ok(StrategyKind::FtOnly(TrainMode::Iid)),
        "icl-ft-iid" => Ok(StrategyKind::IclFt(TrainMode::Iid)),
        other => Err(Error::Config(format!(
            "unknown strategy `{other}` (expected icl-only, ft-only, icl-ft, \
             ft-only-iid, icl-ft-iid)"
        ))),
    }
}
