//! Result tables, matrix summaries, and report files.
//!
//! Machine-readable outputs always carry accuracies as decimals rounded to
//! four places and are written in a fixed order, so identical runs produce
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::defense::TradeoffRow;
use crate::error::{Error, Result};

/// Round to four decimal places (report precision).
pub fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

fn fmt4(v: f64) -> String {
    format!("{:.4}", v)
}

/// A labeled accuracy matrix whose diagonal holds matched configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, values: Vec<Vec<f64>>) -> Self {
        Self {
            row_labels,
            col_labels,
            values,
        }
    }
}

/// Average accuracy over all cells plus the average drop of off-diagonal
/// cells against their column's matched (diagonal) value.
pub fn summarize_matrix(matrix: &Matrix) -> Result<(f64, f64)> {
    let n = matrix.values.len();
    if n == 0 || matrix.values.iter().any(|row| row.len() != n) {
        return Err(Error::Input(format!(
            "matrix summary needs a non-empty square matrix, got {} rows of lengths {:?}",
            n,
            matrix.values.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let total: f64 = matrix.values.iter().flatten().sum();
    let average = total / (n * n) as f64;

    let mut drop_sum = 0.0;
    let mut drop_count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                drop_sum += matrix.values[j][j] - matrix.values[i][j];
                drop_count += 1;
            }
        }
    }
    let average_drop = if drop_count == 0 {
        0.0
    } else {
        drop_sum / drop_count as f64
    };
    Ok((average, average_drop))
}

/// One property-inference result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiaResultRow {
    pub task: String,
    pub property: String,
    pub condition_values: String,
    pub num_shadow: usize,
    pub num_target: usize,
    pub accuracy: f64,
    pub seed: u64,
}

pub fn write_pia_csv(path: &Path, rows: &[PiaResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "task",
        "property",
        "condition_values",
        "num_shadow",
        "num_target",
        "accuracy",
        "seed",
    ])?;
    for r in rows {
        w.write_record([
            r.task.as_str(),
            r.property.as_str(),
            r.condition_values.as_str(),
            &r.num_shadow.to_string(),
            &r.num_target.to_string(),
            &fmt4(r.accuracy),
            &r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One membership-inference result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaResultRow {
    pub attack_family: String,
    /// Metric name for metric-based rows; empty otherwise.
    pub metric: String,
    pub target_model: String,
    pub shadow_model: String,
    pub target_dataset: String,
    pub shadow_dataset: String,
    pub accuracy: f64,
    pub overfit_gap: f64,
    pub seed: u64,
}

pub fn write_mia_csv(path: &Path, rows: &[MiaResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "attack_family",
        "metric",
        "target_model",
        "shadow_model",
        "target_dataset",
        "shadow_dataset",
        "accuracy",
        "overfit_gap",
        "seed",
    ])?;
    for r in rows {
        w.write_record([
            r.attack_family.as_str(),
            r.metric.as_str(),
            r.target_model.as_str(),
            r.shadow_model.as_str(),
            r.target_dataset.as_str(),
            r.shadow_dataset.as_str(),
            &fmt4(r.accuracy),
            &fmt4(r.overfit_gap),
            &r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_defense_csv(path: &Path, rows: &[TradeoffRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "context",
        "sigma",
        "adaptive",
        "utility",
        "attack_family",
        "accuracy",
        "seed",
    ])?;
    for r in rows {
        w.write_record([
            r.context.as_str(),
            &format!("{}", r.sigma),
            &r.adaptive.to_string(),
            &fmt4(r.utility),
            r.family.as_str(),
            &fmt4(r.accuracy),
            &r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write a labeled matrix as CSV (first column = row labels).
pub fn write_matrix_csv(path: &Path, matrix: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(matrix.col_labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in matrix.row_labels.iter().zip(&matrix.values) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| fmt4(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One named result cell of an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub group: String,
    pub row: String,
    pub col: String,
    pub value: f64,
}

/// Machine-readable experiment summary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub experiment_id: String,
    pub cells: Vec<ReportCell>,
    pub summary: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(experiment_id: &str) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            cells: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn push_cell(&mut self, group: &str, row: &str, col: &str, value: f64) {
        self.cells.push(ReportCell {
            group: group.to_string(),
            row: row.to_string(),
            col: col.to_string(),
            value: round4(value),
        });
    }

    pub fn set_summary(&mut self, key: &str, value: f64) {
        self.summary.insert(key.to_string(), round4(value));
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}
