//! Seed aggregation and result-table IO.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::comparison::ResultRow;

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub task: String,
    pub strategy: String,
    pub budget: usize,
    pub n: usize,
    pub mean_accuracy: f64,
    /// 2 × standard error of the mean; absent for a single seed.
    pub two_sem: Option<f64>,
}

/// Mean and 2·SEM per (task, strategy, budget) cell. SEM uses the sample
/// standard deviation (n−1 denominator); a single observation has no SEM.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.task.clone(), r.strategy.clone(), r.budget))
            .or_default()
            .push(r.test_accuracy);
    }
    groups
        .into_iter()
        .map(|((task, strategy, budget), values)| {
            let (mean, two_sem) = mean_and_two_sem(&values);
            AggregateRow {
                task,
                strategy,
                budget,
                n: values.len(),
                mean_accuracy: mean,
                two_sem,
            }
        })
        .collect()
}

pub fn mean_and_two_sem(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sem = (var / n as f64).sqrt();
    (mean, Some(2.0 * sem))
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["task", "strategy", "budget", "n", "mean_accuracy", "two_sem"])?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.strategy.clone(),
            r.budget.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.mean_accuracy),
            r.two_sem.map(|s| format!("{s:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read rows back from a results.csv produced by this crate.
pub fn read_result_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = [
        "task",
        "strategy",
        "model_tag",
        "budget",
        "seed",
        "selected_hp",
        "test_accuracy",
        "prequential_score",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Config(format!(
            "{}: unexpected columns {:?}",
            path.display(),
            headers
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |j: usize| record.get(j).unwrap_or("").to_string();
        let parse_err = |what: &str| {
            Error::Config(format!(
                "{} row {}: bad {what} value",
                path.display(),
                i + 2
            ))
        };
        rows.push(ResultRow {
            task: field(0),
            strategy: field(1),
            model_tag: field(2),
            budget: field(3).parse().map_err(|_| parse_err("budget"))?,
            seed: field(4).parse().map_err(|_| parse_err("seed"))?,
            selected_hp: field(5),
            test_accuracy: field(6).parse().map_err(|_| parse_err("test_accuracy"))?,
            prequential_score: {
                let s = field(7);
                if s.is_empty() {
                    None
                } else {
                    Some(s.parse().map_err(|_| parse_err("prequential_score"))?)
                }
            },
        });
    }
    Ok(rows)
}

/// Plain-text table for the `report` subcommand.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18} {:<16} {:>6} {:>3} {:>10} {:>10}\n",
        "task", "strategy", "budget", "n", "mean_acc", "2sem"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<18} {:<16} {:>6} {:>3} {:>10.4} {:>10}\n",
            r.task,
            r.strategy,
            r.budget,
            r.n,
            r.mean_accuracy,
            r.two_sem.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into()),
        ));
    }
    out
}
