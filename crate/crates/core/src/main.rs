//! Experiment CLI: meta-pretraining, task generation, strategy comparisons,
//! single prequential runs, and report aggregation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use preqlab::checkpoint::load_checkpoint;
use preqlab::prequential::{export_trace_csv, prequential_average, run_prequential, MetricKind};
use preqlab::runner::{
    aggregate, meta_pretrain, read_result_rows, render_table, run_comparison, write_aggregate_csv,
    write_outputs, PretrainConfig, RunConfig,
};
use preqlab::tasks::{save_task_file, split, SplitSpec};
use preqlab::Result;

#[derive(Parser)]
#[command(name = "preqlab", version, about = "Adaptation-strategy laboratory for a small transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-pretrain a base model on the synthetic task family.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Resume from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate a task file from the [task] section of a config.
    GenTask {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Full strategy comparison: budgets × seeds × strategies.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Override the base seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to a single budget.
        #[arg(long)]
        budget: Option<usize>,
        /// Restrict to a single strategy.
        #[arg(long)]
        strategy: Option<String>,
        /// Restrict the ICL-only sweep to a single context size.
        #[arg(long)]
        k: Option<usize>,
    },
    /// One prequential training-and-evaluation run; exports the trace CSV.
    Preq {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Train-set size (defaults to everything except the test split).
        #[arg(long)]
        budget: Option<usize>,
        /// Context size override for the single run.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Aggregate one or more results.csv files into a summary table.
    Report {
        /// Paths to results.csv files.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain {
            config,
            out_dir,
            seed,
            resume,
        } => {
            let cfg = PretrainConfig::from_path(&config)?;
            let outcome = meta_pretrain(&cfg, seed, &out_dir, resume.as_deref())?;
            println!(
                "pretrained to step {}; checkpoint at {}",
                outcome.final_step,
                outcome.checkpoint.display()
            );
            Ok(())
        }
        Command::GenTask { config, out_dir } => {
            let cfg = RunConfig::from_path(&config)?;
            let data = cfg.task.build()?;
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join(format!("{}.jsonl", data.name));
            save_task_file(&path, &data)?;
            println!("wrote {} examples to {}", data.len(), path.display());
            Ok(())
        }
        Command::Run {
            config,
            out_dir,
            seed,
            budget,
            strategy,
            k,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.run.base_seed = seed;
            }
            if let Some(budget) = budget {
                cfg.run.budgets = vec![budget];
            }
            if let Some(strategy) = strategy {
                cfg.run.strategies = vec![strategy];
            }
            if let Some(k) = k {
                cfg.run.k_eval = vec![k];
                cfg.run.k_train = k;
            }
            cfg.validate()?;
            let (base, _, meta) = load_checkpoint(&cfg.model.checkpoint)?;
            let tag = meta
                .get("model_tag")
                .cloned()
                .unwrap_or_else(|| format!("d{}-L{}", base.config.d_model, base.config.n_layers));
            let output = run_comparison(&cfg, &base, &tag)?;
            write_outputs(&out_dir, &cfg, &output)?;
            println!("{}", render_table(&output.aggregates));
            println!("wrote results to {}", out_dir.display());
            Ok(())
        }
        Command::Preq {
            config,
            out_dir,
            seed,
            budget,
            k,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.run.base_seed = seed;
            }
            let data = cfg.task.build()?;
            let n_train = budget.unwrap_or(data.len().saturating_sub(cfg.run.n_test));
            let (train, _) = split(
                &data,
                &SplitSpec {
                    seed: cfg.run.base_seed,
                    n_train,
                    n_test: data.len() - n_train,
                },
            )?;
            let (base, _, _) = load_checkpoint(&cfg.model.checkpoint)?;
            let mut grid = cfg.grid.expand(k.unwrap_or(cfg.run.k_train))?;
            let hp = grid.remove(0);
            let trace = run_prequential(&base, &train, &hp, &cfg.template, cfg.run.base_seed)?;
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("trace.csv");
            export_trace_csv(&trace, &path)?;
            let acc = prequential_average(&trace, MetricKind::Accuracy, None)?;
            let nll = prequential_average(&trace, MetricKind::Nll, None)?;
            println!(
                "prequential run: N={} E={} K={} | avg acc {:.4} | avg nll {:.4} | trace at {}",
                trace.len(),
                hp.epochs,
                hp.k,
                acc.value,
                nll.value,
                path.display()
            );
            Ok(())
        }
        Command::Report { results, out_dir } => {
            let mut rows = Vec::new();
            for path in &results {
                rows.extend(read_result_rows(path)?);
            }
            let agg = aggregate(&rows);
            std::fs::create_dir_all(&out_dir)?;
            write_aggregate_csv(&out_dir.join("aggregate.csv"), &agg)?;
            print!("{}", render_table(&agg));
            Ok(())
        }
    }
}
