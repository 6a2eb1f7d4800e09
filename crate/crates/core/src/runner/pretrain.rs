//! Meta-pretraining: give a scratch model in-context ability by training it
//! on an endless stream of fresh synthetic tasks.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Meta};
use crate::error::{Error, Result};
use crate::model::{init_params, training_loss_and_grads, ModelConfig, Parameters};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{derive_seed, tags};
use crate::tasks::meta::{MetaFamily, MetaStream};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub family: MetaFamily,
    pub steps: u64,
    pub lr: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adafactor
}

fn default_checkpoint_every() -> u64 {
    1000
}

impl PretrainConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.steps == 0 {
            return Err(Error::Config("steps must be ≥ 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be > 0".into()));
        }
        if self.family.max_seq_len > self.model.max_seq_len {
            return Err(Error::Config(format!(
                "family max_seq_len {} exceeds model max_seq_len {}",
                self.family.max_seq_len, self.model.max_seq_len
            )));
        }
        Ok(())
    }
}

pub struct PretrainOutcome {
    pub checkpoint: PathBuf,
    pub final_step: u64,
    /// (step, loss), in order, for the steps run in this invocation.
    pub losses: Vec<(u64, f64)>,
}

/// Train from scratch (or resume) on the meta stream, checkpointing
/// periodically and recording the loss curve. On divergence the last good
/// checkpoint stays on disk and an error is returned.
///
/// Stream item i depends only on (seed, i), so a resumed run reproduces the
/// loss sequence the uninterrupted run would have produced.
pub fn meta_pretrain(
    config: &PretrainConfig,
    seed: u64,
    out_dir: &Path,
    resume_from: Option<&Path>,
) -> Result<PretrainOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let ckpt_path = out_dir.join("base.ckpt");
    let curve_path = out_dir.join("pretrain_loss.csv");

    let stream_seed = derive_seed(seed, &[tags::META_ITEM]);
    let (mut params, mut opt, start_step) = match resume_from {
        None => {
            let params = init_params(&config.model, seed)?;
            (params, Optimizer::new(config.optimizer), 0u64)
        }
        Some(path) => {
            let (params, opt_tensors, meta) = load_checkpoint(path)?;
            if params.config != config.model {
                return Err(Error::Config(
                    "resume checkpoint model config does not match".into(),
                ));
            }
            let step: u64 = meta
                .get("step")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Checkpoint("resume checkpoint missing step".into()))?;
            let kind = match meta.get("optimizer").map(String::as_str) {
                Some("adam") => OptimizerKind::Adam,
                _ => OptimizerKind::Adafactor,
            };
            let opt = Optimizer::from_named_tensors(kind, step, &opt_tensors)?;
            (params, opt, step)
        }
    };

    let mut curve = std::io::BufWriter::new(if start_step == 0 {
        let mut f = std::fs::File::create(&curve_path)?;
        writeln!(f, "step,loss")?;
        f
    } else {
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&curve_path)?
    });

    let stream = MetaStream::new(config.family.clone(), stream_seed);
    let mut losses = Vec::new();
    let mut last_saved = start_step;
    for step in start_step + 1..=config.steps {
        let (_, seq) = stream.item(step - 1)?;
        let (loss, grads) = training_loss_and_grads(&params, &seq)?;
        if !loss.is_finite() {
            curve.flush()?;
            return Err(Error::NonFiniteLoss { step });
        }
        opt.step(&mut params, &grads, config.lr)?;
        writeln!(curve, "{step},{loss:.12}")?;
        losses.push((step, loss));
        if step % config.checkpoint_every == 0 {
            save(&ckpt_path, &params, &opt, step, config)?;
            last_saved = step;
        }
    }
    if last_saved != config.steps {
        save(&ckpt_path, &params, &opt, config.steps, config)?;
    }
    curve.flush()?;
    Ok(PretrainOutcome {
        checkpoint: ckpt_path,
        final_step: config.steps,
        losses,
    })
}

fn save(
    path: &Path,
    params: &Parameters,
    opt: &Optimizer,
    step: u64,
    config: &PretrainConfig,
) -> Result<()> {
    let mut meta = Meta::new();
    meta.insert("step".into(), step.to_string());
    meta.insert("optimizer".into(), opt.kind().to_string());
    meta.insert("kind".into(), "meta-pretrain".into());
    meta.insert(
        "model_tag".into(),
        format!("d{}-L{}", config.model.d_model, config.model.n_layers),
    );
    let extra = opt.to_named_tensors();
    save_checkpoint(path, params, &extra, &meta)
}
