//! Experiment orchestration: meta-pretraining, strategy comparisons across
//! sample-size budgets, seed aggregation, and plot-ready CSV emission.

mod comparison;
mod config;
mod parse;
mod pretrain;
mod report;

pub use comparison::{run_comparison, write_outputs, write_results_csv, ComparisonOutput, ResultRow, TimingRow};
pub use config::{GridConfig, RunConfig, TaskSpec};
pub use parse::parse_response;
pub use pretrain::{meta_pretrain, PretrainConfig, PretrainOutcome};
pub use report::{aggregate, mean_and_two_sem, read_result_rows, render_table, write_aggregate_csv, AggregateRow};
