use std::fmt::Write;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::coupled_graph::CoupledInstance;

use super::eval::{evaluate, EvalReport};
use super::train::{train, TrainConfig};
use super::HarnessError;

pub const LAYER_GRID: [usize; 5] = [2, 3, 4, 5, 6];
pub const LAMBDA_GRID: [f64; 6] = [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Layers,
    Lambda,
}

/// One accuracy row per metric, one column per grid value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub labels: Vec<String>,
    pub exact: Vec<f64>,
    pub soft: Vec<f64>,
    pub final_joint: Vec<f64>,
}

impl SweepTable {
    /// Plain-text table: a header of grid labels and one row per metric,
    /// accuracies in percent.
    pub fn format(&self) -> String {
        let width = self.labels.iter().map(|l| l.chars().count()).max().unwrap_or(0).max(7);
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "metric");
        for l in &self.labels {
            let _ = write!(out, " | {l:>width$}");
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(8 + self.labels.len() * (width + 3)));
        for (name, row) in [("exact", &self.exact), ("soft", &self.soft)] {
            let _ = write!(out, "{name:<8}");
            for v in row.iter() {
                let _ = write!(out, " | {:>width$.2}", v * 100.0);
            }
            out.push('\n');
        }
        out
    }
}

fn lambda_label(l: f64) -> String {
    if l == 0.0 {
        "λ = 0".into()
    } else {
        format!("λ = {l:e}")
    }
}

fn run_grid(
    train_corpus: &[CoupledInstance],
    eval_corpus: &[CoupledInstance],
    configs: Vec<TrainConfig>,
) -> Result<Vec<(EvalReport, f64)>, HarnessError> {
    thread::scope(|s| {
        let handles: Vec<_> = configs
            .into_iter()
            .map(|cfg| {
                s.spawn(move || -> Result<(EvalReport, f64), HarnessError> {
                    let out = train(train_corpus, &cfg)?;
                    let report = evaluate(&out.model, eval_corpus)?;
                    let joint = out.final_loss().map_or(f64::NAN, |l| l.joint);
                    Ok((report, joint))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

fn table(parameter: SweepParameter, labels: Vec<String>, results: Vec<(EvalReport, f64)>) -> SweepTable {
    SweepTable {
        parameter,
        labels,
        exact: results.iter().map(|(r, _)| r.exact_accuracy).collect(),
        soft: results.iter().map(|(r, _)| r.soft_accuracy).collect(),
        final_joint: results.iter().map(|(_, j)| *j).collect(),
    }
}

/// Trains one model per layer count, all with the base seed.
pub fn sweep_layers(
    train_corpus: &[CoupledInstance],
    eval_corpus: &[CoupledInstance],
    base: &TrainConfig,
    grid: &[usize],
) -> Result<SweepTable, HarnessError> {
    let configs = grid
        .iter()
        .map(|&l| TrainConfig {
            layers: l,
            checkpoint: None,
            ..base.clone()
        })
        .collect();
    let results = run_grid(train_corpus, eval_corpus, configs)?;
    let labels = grid.iter().map(|l| format!("ℓ = {l}")).collect();
    Ok(table(SweepParameter::Layers, labels, results))
}

/// Trains one model per medium-loss weight, all with the base seed.
pub fn sweep_lambda(
    train_corpus: &[CoupledInstance],
    eval_corpus: &[CoupledInstance],
    base: &TrainConfig,
    grid: &[f64],
) -> Result<SweepTable, HarnessError> {
    let configs = grid
        .iter()
        .map(|&l| TrainConfig {
            lambda: l,
            checkpoint: None,
            ..base.clone()
        })
        .collect();
    let results = run_grid(train_corpus, eval_corpus, configs)?;
    let labels = grid.iter().map(|&l| lambda_label(l)).collect();
    Ok(table(SweepParameter::Lambda, labels, results))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub with_exchange: EvalReport,
    pub without_exchange: EvalReport,
    /// Exact accuracy with exchange minus without.
    pub delta: f64,
}

impl AblationReport {
    pub fn format(&self) -> String {
        format!(
            "{:<16} {:>8} {:>8}\n{:<16} {:>8.2} {:>8.2}\n{:<16} {:>8.2} {:>8.2}\n{:<16} {:>8.2}\n",
            "variant",
            "exact",
            "soft",
            "with exchange",
            self.with_exchange.exact_accuracy * 100.0,
            self.with_exchange.soft_accuracy * 100.0,
            "without exchange",
            self.without_exchange.exact_accuracy * 100.0,
            self.without_exchange.soft_accuracy * 100.0,
            "delta",
            self.delta * 100.0,
        )
    }
}

/// Trains the same configuration with and without medium exchange.
pub fn ablate_gmf(
    train_corpus: &[CoupledInstance],
    eval_corpus: &[CoupledInstance],
    base: &TrainConfig,
) -> Result<AblationReport, HarnessError> {
    let configs = [true, false]
        .into_iter()
        .map(|on| TrainConfig {
            exchange_enabled: on,
            checkpoint: None,
            ..base.clone()
        })
        .collect();
    let mut results = run_grid(train_corpus, eval_corpus, configs)?.into_iter();
    let (with_exchange, _) = results.next().expect("two runs");
    let (without_exchange, _) = results.next().expect("two runs");
    Ok(AblationReport {
        delta: with_exchange.exact_accuracy - without_exchange.exact_accuracy,
        with_exchange,
        without_exchange,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_and_labels() {
        assert_eq!(LAYER_GRID.len(), 5);
        assert_eq!(LAMBDA_GRID.len(), 6);
        let labels: Vec<String> = LAMBDA_GRID.iter().map(|&l| lambda_label(l)).collect();
        assert_eq!(
            labels,
            ["λ = 0", "λ = 1e-5", "λ = 1e-4", "λ = 1e-3", "λ = 1e-2", "λ = 1e-1"]
        );
    }
}
