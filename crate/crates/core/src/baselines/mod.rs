//! Bag-of-words baseline classifiers over TF-IDF vectors.

mod boosted;
mod logistic;

pub use boosted::{train_boosted, BoostedModel, BoostedParams, Node, Tree};
pub use logistic::{train_logistic, LogisticGradient, LogisticModel, LogisticParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::market::PerformanceClass;

pub type LabeledVector = (SparseVector, PerformanceClass);

/// Class probabilities for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    /// `[p_under, p_average, p_over]`
    pub probabilities: [f64; 3],
    pub predicted: PerformanceClass,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, probabilities: [f64; 3]) -> Self {
        PredictionRecord {
            id: id.into(),
            predicted: argmax(&probabilities),
            probabilities,
        }
    }

    pub fn p(&self, class: PerformanceClass) -> f64 {
        self.probabilities[class.index()]
    }
}

/// Index of the largest entry; ties go to the lower class.
pub fn argmax(values: &[f64; 3]) -> PerformanceClass {
    let mut best = 0;
    for k in 1..3 {
        if values[k] > values[best] {
            best = k;
        }
    }
    PerformanceClass::ALL[best]
}

pub fn softmax(logits: &[f64; 3]) -> [f64; 3] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - max).exp());
    let s = e[0] + e[1] + e[2];
    e.map(|v| v / s)
}

/// `-log softmax(logits)[target]`, computed through log-sum-exp.
pub fn cross_entropy(logits: &[f64; 3], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

pub(crate) fn check_all_classes(labels: impl Iterator<Item = PerformanceClass>) -> Result<()> {
    let mut seen = [false; 3];
    for c in labels {
        seen[c.index()] = true;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Data(format!(
            "class {} absent from training data",
            PerformanceClass::ALL[k]
        )));
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Usage(format!(
            "feature dimension mismatch: model expects {expected}, vector has {got}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_prefer_lower_class() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), PerformanceClass::Under);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), PerformanceClass::Average);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), PerformanceClass::Under);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let z = [0.3, -1.2, 2.5];
        let p = softmax(&z);
        for c in [-50.0, 1e-3, 7.0, 300.0] {
            let q = softmax(&z.map(|v| v + c));
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-12);
            }
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let big = softmax(&[1000.0, 0.0, -1000.0]);
        assert!(big.iter().all(|v| v.is_finite()));
    }
}
