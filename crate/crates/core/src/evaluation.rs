//! Accuracy, macro-F1 and confusion matrices over three-way predictions.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::PredictionRecord;
use crate::error::{Error, Result};
use crate::market::PerformanceClass;

/// Rows are true classes, columns predicted, both in `PerformanceClass::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (PerformanceClass, PerformanceClass)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in pairs {
            m.counts[t.index()][p.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|k| self.counts[k][k]).sum()
    }

    fn predicted(&self, k: usize) -> u64 {
        (0..3).map(|t| self.counts[t][k]).sum()
    }

    fn actual(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<PerformanceClass, ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let n = confusion.total();
        if n == 0 {
            return Err(Error::Usage("cannot evaluate zero predictions".into()));
        }
        let mut per_class = BTreeMap::new();
        let mut f1_sum = 0.0;
        for class in PerformanceClass::ALL {
            let k = class.index();
            let tp = confusion.counts[k][k];
            let precision = ratio(tp, confusion.predicted(k));
            let recall = ratio(tp, confusion.actual(k));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            f1_sum += f1;
            per_class.insert(
                class,
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support: confusion.actual(k),
                },
            );
        }
        Ok(MetricsReport {
            n,
            accuracy: ratio(confusion.trace(), n),
            macro_f1: f1_sum / 3.0,
            per_class,
            confusion,
        })
    }

    /// `Acc.: 0.43 F1: 0.43`
    pub fn cell(&self) -> String {
        format!("Acc.: {:.2} F1: {:.2}", self.accuracy, self.macro_f1)
    }
}

/// Scores predictions against labels keyed by document id.
pub fn evaluate(
    predictions: &[PredictionRecord],
    labels: &BTreeMap<String, PerformanceClass>,
) -> Result<MetricsReport> {
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(predictions.len());
    for p in predictions {
        let truth = labels
            .get(&p.id)
            .ok_or_else(|| Error::Usage(format!("prediction {} has no label", p.id)))?;
        if !seen.insert(p.id.as_str()) {
            return Err(Error::Usage(format!("duplicate prediction for {}", p.id)));
        }
        pairs.push((*truth, p.predicted));
    }
    MetricsReport::from_confusion(ConfusionMatrix::from_pairs(pairs))
}

/// Aligned text table: one row per model, one column per text source.
pub fn format_table(rows: &[(String, Vec<Option<&MetricsReport>>)], columns: &[&str]) -> String {
    format_table_with("Model/ Data", rows, columns)
}

/// [`format_table`] with a custom top-left heading.
pub fn format_table_with(corner: &str, rows: &[(String, Vec<Option<&MetricsReport>>)], columns: &[&str]) -> String {
    let first = rows
        .iter()
        .map(|(m, _)| m.len())
        .chain([corner.len()])
        .max()
        .unwrap_or(0);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, r)| r.iter().map(|m| m.map_or("-".to_string(), MetricsReport::cell)).collect())
        .collect();
    let widths: Vec<usize> = (0..columns.len())
        .map(|c| {
            cells
                .iter()
                .filter_map(|r| r.get(c).map(String::len))
                .chain([columns[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{corner:<first$}");
    for (c, w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {c:<w$}");
    }
    out.push('\n');
    for ((model, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{model:<first$}");
        for (c, w) in row.iter().zip(&widths) {
            let _ = write!(out, "  {c:<w$}");
        }
        out.push('\n');
    }
    out.lines().map(str::trim_end).collect::<Vec<_>>().join("\n") + "\n"
}
