//! Shared fixtures for the acceptance suite.
//!
//! The expensive artifacts — the meta-pretrained base model and the two
//! strategy-comparison sweeps — are computed once per process behind
//! `LazyLock`s and shared by every criterion. The pretrained checkpoint is
//! additionally cached on disk under `CARGO_TARGET_TMPDIR`, keyed by a hash
//! of everything that determines it, so repeated `cargo test` invocations
//! skip the train.

use std::path::PathBuf;
use std::sync::LazyLock;

use preqlab::checkpoint::load_checkpoint;
use preqlab::model::{ModelConfig, Parameters};
use preqlab::optim::OptimizerKind;
use preqlab::prequential::{
    prequential_average, run_prequential, AdapterKind, HpConfig, MetricKind,
};
use preqlab::prompt::Template;
use preqlab::rng::derive_seed;
use preqlab::runner::{meta_pretrain, PretrainConfig};
use preqlab::strategies::{evaluate, Predictor, StrategyKind, TrainMode};
use preqlab::tasks::meta::{MetaFamily, MetaKind};
use preqlab::tasks::{
    flip_labels, gen_echo_classification, gen_keyed_classification, split, Dataset, SplitSpec,
};

pub const N_SEEDS: usize = 5;
pub const N_TEST: usize = 200;
pub const K_TRAIN: usize = 3;
pub const PRETRAIN_STEPS: u64 = 10_000;
pub const PRETRAIN_SEED: u64 = 0;
/// Bump to invalidate the on-disk checkpoint cache.
const CACHE_SALT: u64 = 3;

pub fn template() -> Template {
    Template::default()
        .with_separator("\n\n")
        .with_query_suffix(" -> ")
}

pub fn model_config() -> ModelConfig {
    ModelConfig {
        vocab_size: preqlab::prompt::VOCAB_SIZE,
        d_model: 128,
        n_layers: 2,
        n_heads: 4,
        d_ff: 512,
        max_seq_len: 384,
    }
}

pub fn pretrain_config() -> PretrainConfig {
    PretrainConfig {
        model: model_config(),
        family: MetaFamily {
            kinds: vec![MetaKind::Keyed, MetaKind::Keyed, MetaKind::Echo],
            k_range: (0, 8),
            n_keys_range: (2, 4),
            n_classes_range: (2, 3),
            noise_range: (0, 1),
            max_seq_len: 384,
            template: template(),
        },
        steps: PRETRAIN_STEPS,
        lr: 3e-3,
        optimizer: OptimizerKind::Adafactor,
        checkpoint_every: 2000,
    }
}

/// The grid pinned by the selection-quality criterion; shared by the
/// qualitative-signature sweeps.
pub fn grid(k: usize, optimizer: OptimizerKind, adapter: AdapterKind) -> Vec<HpConfig> {
    let mut out = Vec::new();
    for lr in [3e-4, 1e-3, 3e-3] {
        for epochs in [1, 2, 5] {
            out.push(HpConfig {
                lr,
                epochs,
                k,
                optimizer,
                adapter,
            });
        }
    }
    out
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("preqlab-acceptance")
}

fn checkpoint_cache_key() -> String {
    use sha2::{Digest, Sha256};
    let cfg = pretrain_config();
    let desc = format!(
        "{}|{}|{}|{}",
        toml::to_string(&cfg).expect("config serializes"),
        PRETRAIN_SEED,
        env!("CARGO_PKG_VERSION"),
        CACHE_SALT
    );
    let mut hasher = Sha256::new();
    hasher.update(desc.as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// The meta-pretrained base model (trained on first use, cached on disk).
pub static BASE: LazyLock<Parameters> = LazyLock::new(|| {
    let dir = cache_dir().join(format!("base-{}", checkpoint_cache_key()));
    let ckpt = dir.join("base.ckpt");
    if !ckpt.exists() {
        eprintln!(
            "[acceptance] meta-pretraining base model ({PRETRAIN_STEPS} steps) into {}",
            dir.display()
        );
        meta_pretrain(&pretrain_config(), PRETRAIN_SEED, &dir, None)
            .expect("meta-pretraining succeeds");
    }
    let (params, _, _) = load_checkpoint(&ckpt).expect("cached checkpoint loads");
    params
});

/// Held-out keyed-classification task (map-reading): ten trigger words,
/// two classes, no filler.
pub fn keyed_task() -> Dataset {
    gen_keyed_classification(10, 2, 0, 400, 9001).expect("task generates")
}

/// Held-out echo task and its flipped variant (bias violation).
pub fn echo_task() -> Dataset {
    gen_echo_classification(1, 400, 9002).expect("task generates")
}

pub fn echo_task_flipped() -> Dataset {
    flip_labels(&echo_task()).expect("binary task flips")
}

/// Evaluate frozen-or-trained parameters on a test split with k-shot context
/// drawn from the train split.
pub fn eval_accuracy(
    params: &Parameters,
    train: &Dataset,
    test: &Dataset,
    kind: StrategyKind,
    k_eval: usize,
    seed: u64,
) -> f64 {
    let t = template();
    let predictor = Predictor::new(params, kind, k_eval, &t, train).expect("predictor builds");
    evaluate(&predictor, test, derive_seed(seed, &[0xE7A1, k_eval as u64]))
        .expect("evaluation succeeds")
        .accuracy
}

/// Everything one seed contributes to the signature criteria on one task:
/// per-budget ICL sweeps, FT-only and ICL+FT selections, and (at the large
/// budget) per-config scores and held-out accuracies for the selection-
/// quality criterion.
pub struct SeedOutcome {
    pub icl_small: Vec<(usize, f64)>,
    pub icl_large: Vec<(usize, f64)>,
    pub ft_small: f64,
    pub ft_large: f64,
    pub iclft_small: f64,
    /// (prequential score, held-out accuracy) for every grid config at the
    /// large budget, in grid order.
    pub iclft_large_grid: Vec<(f64, f64)>,
    pub iclft_large_selected_idx: usize,
}

pub const SMALL_BUDGET: usize = 4;
pub const LARGE_BUDGET: usize = 64;
pub const ICL_SWEEP_SMALL: [usize; 3] = [1, 2, 4];
pub const ICL_SWEEP_LARGE: [usize; 4] = [1, 2, 4, 8];

fn select_by_score(grid: &[HpConfig], scores: &[f64]) -> usize {
    let mut winner = 0;
    for cand in 1..grid.len() {
        let better = scores[cand] > scores[winner];
        let tied = scores[cand] == scores[winner];
        let (c, w) = (&grid[cand], &grid[winner]);
        if better || (tied && (c.lr < w.lr || (c.lr == w.lr && c.epochs < w.epochs))) {
            winner = cand;
        }
    }
    winner
}

pub fn run_seed(data: &Dataset, seed: u64) -> SeedOutcome {
    let t = template();
    let base: &Parameters = &BASE;
    let (train_small, test) = split(
        data,
        &SplitSpec {
            seed,
            n_train: SMALL_BUDGET,
            n_test: N_TEST,
        },
    )
    .expect("split fits");
    let (train_large, _) = split(
        data,
        &SplitSpec {
            seed,
            n_train: LARGE_BUDGET,
            n_test: N_TEST,
        },
    )
    .expect("split fits");

    let icl = |train: &Dataset, k: usize| {
        eval_accuracy(base, train, &test, StrategyKind::IclOnly, k, seed)
    };
    let icl_small: Vec<(usize, f64)> =
        ICL_SWEEP_SMALL.iter().map(|&k| (k, icl(&train_small, k))).collect();
    let icl_large: Vec<(usize, f64)> =
        ICL_SWEEP_LARGE.iter().map(|&k| (k, icl(&train_large, k))).collect();

    let ft_grid = grid(0, OptimizerKind::Adafactor, AdapterKind::None);
    let ft_cell = |train: &Dataset| {
        let run_seed = derive_seed(seed, &[0xF7]);
        let (_, trace) = preqlab::prequential::hp_select(
            base,
            train,
            &ft_grid,
            &t,
            run_seed,
            MetricKind::Accuracy,
        )
        .expect("ft-only selection runs");
        eval_accuracy(
            &trace.final_params,
            train,
            &test,
            StrategyKind::FtOnly(TrainMode::Prequential),
            0,
            seed,
        )
    };
    let ft_small = ft_cell(&train_small);
    let ft_large = ft_cell(&train_large);

    let iclft_grid = grid(K_TRAIN, OptimizerKind::Adafactor, AdapterKind::None);
    let iclft_small = {
        let run_seed = derive_seed(seed, &[0x1C]);
        let (hp, trace) = preqlab::prequential::hp_select(
            base,
            &train_small,
            &iclft_grid,
            &t,
            run_seed,
            MetricKind::Accuracy,
        )
        .expect("icl+ft selection runs");
        eval_accuracy(
            &trace.final_params,
            &train_small,
            &test,
            StrategyKind::IclFt(TrainMode::Prequential),
            hp.k,
            seed,
        )
    };

    // Large budget: every grid point gets a prequential run and a held-out
    // evaluation, which serves the signature criterion (via the selected
    // config) and the selection-quality criterion (via the whole table).
    let run_seed = derive_seed(seed, &[0x1C]);
    let results = preqlab::par::map_indexed(iclft_grid.len(), |g| {
        let trace = run_prequential(base, &train_large, &iclft_grid[g], &t, run_seed)
            .expect("grid run succeeds");
        let score = prequential_average(&trace, MetricKind::Accuracy, None)
            .expect("trace non-empty")
            .value;
        let acc = eval_accuracy(
            &trace.final_params,
            &train_large,
            &test,
            StrategyKind::IclFt(TrainMode::Prequential),
            iclft_grid[g].k,
            seed,
        );
        (score, acc)
    });
    let scores: Vec<f64> = results.iter().map(|r| r.0).collect();
    let selected = select_by_score(&iclft_grid, &scores);

    SeedOutcome {
        icl_small,
        icl_large,
        ft_small,
        ft_large,
        iclft_small,
        iclft_large_grid: results,
        iclft_large_selected_idx: selected,
    }
}

/// The keyed-task sweep shared by the signature, selection-quality, and LoRA
/// criteria.
pub static KEYED_SWEEP: LazyLock<Vec<SeedOutcome>> = LazyLock::new(|| {
    let data = keyed_task();
    LazyLock::force(&BASE);
    preqlab::par::map_indexed(N_SEEDS, |s| run_seed(&data, s as u64))
});

/// LoRA ICL+FT at the large budget: selected-config held-out accuracy per
/// seed (Adam optimizer, rank-16 adapters, same lr × epochs grid).
pub static LORA_LARGE: LazyLock<Vec<f64>> = LazyLock::new(|| {
    let data = keyed_task();
    LazyLock::force(&BASE);
    let t = template();
    let lora_grid = grid(K_TRAIN, OptimizerKind::Adam, AdapterKind::Lora(16));
    preqlab::par::map_indexed(N_SEEDS, |s| {
        let seed = s as u64;
        let (train, test) = split(
            &data,
            &SplitSpec {
                seed,
                n_train: LARGE_BUDGET,
                n_test: N_TEST,
            },
        )
        .expect("split fits");
        let run_seed = derive_seed(seed, &[0x10A]);
        let (hp, trace) = preqlab::prequential::hp_select(
            &BASE,
            &train,
            &lora_grid,
            &t,
            run_seed,
            MetricKind::Accuracy,
        )
        .expect("lora selection runs");
        eval_accuracy(
            &trace.final_params,
            &train,
            &test,
            StrategyKind::IclFt(TrainMode::Prequential),
            hp.k,
            seed,
        )
    })
});

/// Flipped-label sweep on the echo task (plus the unflipped small-budget
/// reference) for the bias-violation criterion.
pub struct EchoOutcome {
    /// Best-K ICL accuracy on the flipped task at the large budget.
    pub icl_flipped_large: f64,
    pub ft_flipped_large: f64,
    pub iclft_flipped_large: f64,
    /// Best-K ICL at budget 2: flipped vs unflipped.
    pub icl_flipped_tiny: f64,
    pub icl_unflipped_tiny: f64,
}

pub static ECHO_SWEEP: LazyLock<Vec<EchoOutcome>> = LazyLock::new(|| {
    let flipped = echo_task_flipped();
    let plain = echo_task();
    LazyLock::force(&BASE);
    let t = template();
    preqlab::par::map_indexed(N_SEEDS, |s| {
        let seed = s as u64;
        let base: &Parameters = &BASE;
        let (train_large, test_flipped) = split(
            &flipped,
            &SplitSpec {
                seed,
                n_train: LARGE_BUDGET,
                n_test: N_TEST,
            },
        )
        .expect("split fits");
        let icl_flipped_large = ICL_SWEEP_LARGE
            .iter()
            .map(|&k| eval_accuracy(base, &train_large, &test_flipped, StrategyKind::IclOnly, k, seed))
            .fold(f64::NEG_INFINITY, f64::max);

        let ft_grid = grid(0, OptimizerKind::Adafactor, AdapterKind::None);
        let (_, ft_trace) = preqlab::prequential::hp_select(
            base,
            &train_large,
            &ft_grid,
            &t,
            derive_seed(seed, &[0xF8]),
            MetricKind::Accuracy,
        )
        .expect("ft selection runs");
        let ft_flipped_large = eval_accuracy(
            &ft_trace.final_params,
            &train_large,
            &test_flipped,
            StrategyKind::FtOnly(TrainMode::Prequential),
            0,
            seed,
        );

        let iclft_grid = grid(K_TRAIN, OptimizerKind::Adafactor, AdapterKind::None);
        let (hp, iclft_trace) = preqlab::prequential::hp_select(
            base,
            &train_large,
            &iclft_grid,
            &t,
            derive_seed(seed, &[0x1D]),
            MetricKind::Accuracy,
        )
        .expect("icl+ft selection runs");
        let iclft_flipped_large = eval_accuracy(
            &iclft_trace.final_params,
            &train_large,
            &test_flipped,
            StrategyKind::IclFt(TrainMode::Prequential),
            hp.k,
            seed,
        );

        let tiny = |data: &Dataset| {
            let (train, test) = split(
                data,
                &SplitSpec {
                    seed,
                    n_train: 2,
                    n_test: N_TEST,
                },
            )
            .expect("split fits");
            [1usize, 2]
                .iter()
                .map(|&k| eval_accuracy(base, &train, &test, StrategyKind::IclOnly, k, seed))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        EchoOutcome {
            icl_flipped_large,
            ft_flipped_large,
            iclft_flipped_large,
            icl_flipped_tiny: tiny(&flipped),
            icl_unflipped_tiny: tiny(&plain),
        }
    })
});

// ---- small statistics helpers ----

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sem(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Two-sample joint 2σ band: 2·sqrt(sem_a² + sem_b²).
pub fn joint_two_sigma(a: &[f64], b: &[f64]) -> f64 {
    2.0 * (sem(a).powi(2) + sem(b).powi(2)).sqrt()
}
