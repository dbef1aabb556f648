//! Comparison of several round logs.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::{format_csv, RoundLog};

/// Rounds averaged for the plateau gradient norm: the last quarter, at least one.
pub fn plateau_window(rounds: usize) -> usize {
    (rounds / 4).max(1)
}

/// Mean `‖∇L‖²` over the last quarter of the logged rounds.
pub fn plateau_grad_norm(logs: &[RoundLog]) -> f64 {
    if logs.is_empty() {
        return f64::NAN;
    }
    let tail = &logs[logs.len() - plateau_window(logs.len()).min(logs.len())..];
    tail.iter().map(|l| l.grad_norm_sq).sum::<f64>() / tail.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub rounds: usize,
    pub final_val_acc: f64,
    pub final_test_acc: f64,
    pub total_bytes: u64,
    pub plateau_grad_norm_sq: f64,
}

pub fn summarize(name: &str, logs: &[RoundLog]) -> Result<Summary> {
    let last = logs
        .last()
        .ok_or_else(|| Error::Format(format!("`{name}` has no rounds")))?;
    Ok(Summary {
        name: name.to_string(),
        rounds: logs.len(),
        final_val_acc: last.val_acc,
        final_test_acc: last.test_acc,
        total_bytes: last.bytes_cum,
        plateau_grad_norm_sq: plateau_grad_norm(logs),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub csv: String,
    pub summaries: Vec<Summary>,
    pub warnings: Vec<String>,
}

/// Merges named logs into one CSV aligned by round. A single log is passed
/// through unchanged; several produce `round` plus `<name>_val_acc` and
/// `<name>_bytes_cum` per input, truncated to the shortest log.
pub fn compare(runs: &[(String, Vec<RoundLog>)]) -> Result<Comparison> {
    if runs.is_empty() {
        return Err(Error::invalid("logs", "at least one log is required"));
    }
    let summaries = runs.iter().map(|(n, l)| summarize(n, l)).collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let csv = if let [(_, logs)] = runs {
        format_csv(logs)
    } else {
        let rounds = runs.iter().map(|(_, l)| l.len()).min().unwrap_or(0);
        for (name, logs) in runs {
            if logs.len() != rounds {
                warnings.push(format!(
                    "{name} has {} rounds; aligning on the first {rounds}",
                    logs.len()
                ));
            }
        }
        let mut csv = String::from("round");
        for (name, _) in runs {
            let _ = write!(csv, ",{name}_val_acc,{name}_bytes_cum");
        }
        csv.push('\n');
        for i in 0..rounds {
            let _ = write!(csv, "{}", runs[0].1[i].round);
            for (_, logs) in runs {
                let _ = write!(csv, ",{},{}", logs[i].val_acc, logs[i].bytes_cum);
            }
            csv.push('\n');
        }
        csv
    };
    Ok(Comparison {
        csv,
        summaries,
        warnings,
    })
}

/// Fixed-width text table of summaries.
pub fn summary_table(summaries: &[Summary]) -> String {
    let width = summaries.iter().map(|s| s.name.len()).max().unwrap_or(0).max(8);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>8}  {:>8}  {:>14}  {:>12}\n",
        "strategy", "rounds", "val_acc", "test_acc", "total_bytes", "plateau_grad"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>8.4}  {:>8.4}  {:>14}  {:>12.4e}",
            s.name, s.rounds, s.final_val_acc, s.final_test_acc, s.total_bytes, s.plateau_grad_norm_sq
        );
    }
    out
}
