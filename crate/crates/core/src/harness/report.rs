use log::warn;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{Data, ExperimentConfig};
use super::train::{distill, Aggregate, RunResult};
use crate::error::{Error, Result};
use crate::metrics::{fmt_sig9, CsvTable};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub result: std::result::Result<RunResult, String>,
}

/// Runs `distill` once per α and sorts rows by mean final top-1, best first.
/// Failed runs are kept (as errors) and sort last.
pub fn sweep_alpha(cfg: &ExperimentConfig, data: &Data, teacher: &Checkpoint, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha list is empty".into()));
    }
    let mut rows: Vec<SweepRow> = alphas
        .iter()
        .map(|&alpha| {
            let mut c = cfg.clone();
            c.distill.alpha = alpha;
            let result = c.validate().and_then(|_| distill(&c, data, teacher)).map_err(|e| {
                warn!("alpha {alpha}: {e}");
                e.to_string()
            });
            SweepRow { alpha, result }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &SweepRow| r.result.as_ref().map_or(f64::NEG_INFINITY, |r| r.top1.mean);
        key(b).total_cmp(&key(a))
    });
    Ok(rows)
}

pub fn sweep_table(rows: &[SweepRow]) -> CsvTable {
    let mut t = CsvTable::new(
        ["alpha", "top1_mean", "top1_std", "agreement_mean", "agreement_std", "error"]
            .map(String::from)
            .to_vec(),
    );
    for r in rows {
        let mut row = vec![r.alpha.to_string()];
        match &r.result {
            Ok(res) => {
                row.extend(agg_cells(res.top1));
                row.extend(agg_cells(res.val_agreement));
                row.push(String::new());
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), 4));
                row.push(e.clone());
            }
        }
        t.push(row);
    }
    t
}

fn agg_cells(a: Aggregate) -> [String; 2] {
    [fmt_sig9(a.mean), fmt_sig9(a.std)]
}

/// Metrics compared across runs: name and per-seed extractor.
pub const COMPARED: [&str; 3] = ["top1", "agreement", "ms_per_batch"];

fn per_seed(r: &RunResult, metric: &str) -> Vec<f64> {
    r.seeds
        .iter()
        .map(|s| match metric {
            "top1" => s.final_top1,
            "agreement" => s.analysis.val_agreement,
            _ => s.timing.median_ms,
        })
        .collect()
}

/// One comparison entry; `kind` is `run` or `delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kind: String,
    pub label: String,
    pub metric: String,
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Per-run mean ± std rows, then a Δ row (later minus earlier) per metric
/// for every pair of runs.
pub fn compare_runs(results: &[RunResult]) -> Result<Comparison> {
    let Some(first) = results.first() else {
        return Err(Error::IncompatibleRuns("nothing to compare".into()));
    };
    for r in results {
        if r.dataset != first.dataset {
            return Err(Error::IncompatibleRuns(format!(
                "`{}` used dataset {} but `{}` used {}",
                first.label, first.dataset, r.label, r.dataset
            )));
        }
        if r.student != first.student {
            return Err(Error::IncompatibleRuns(format!(
                "`{}` and `{}` train different students",
                first.label, r.label
            )));
        }
    }
    let mut rows = Vec::new();
    for r in results {
        for metric in COMPARED {
            let a = Aggregate::of(&per_seed(r, metric)).expect("runs have seeds");
            rows.push(ComparisonRow {
                kind: "run".into(),
                label: r.label.clone(),
                metric: metric.into(),
                mean: a.mean,
                std: Some(a.std),
            });
        }
    }
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            for metric in COMPARED {
                let mean = |r| Aggregate::of(&per_seed(r, metric)).expect("runs have seeds").mean;
                rows.push(ComparisonRow {
                    kind: "delta".into(),
                    label: format!("{} - {}", b.label, a.label),
                    metric: metric.into(),
                    mean: mean(b) - mean(a),
                    std: None,
                });
            }
        }
    }
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(["kind", "label", "metric", "mean", "std"].map(String::from).to_vec());
        for r in &self.rows {
            t.push(vec![
                r.kind.clone(),
                r.label.clone(),
                r.metric.clone(),
                fmt_sig9(r.mean),
                r.std.map(fmt_sig9).unwrap_or_default(),
            ]);
        }
        t
    }

    pub fn get(&self, kind: &str, label: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.kind == kind && r.label == label && r.metric == metric)
            .map(|r| r.mean)
    }
}
