use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_all_classes, check_dim, cross_entropy, softmax, LabeledVector, PredictionRecord};
use crate::error::{Error, Result};
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 strength on the weight matrix; the bias is not penalized.
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            learning_rate: 0.1,
            epochs: 50,
            l2: 1e-4,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression, `softmax(W x + b)` with `W` of shape 3 x dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub dim: usize,
    pub weights: [Vec<f64>; 3],
    pub bias: [f64; 3],
    pub params: LogisticParams,
    /// Full-data objective after each epoch.
    pub loss_log: Vec<f64>,
}

/// Gradient of the regularized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticGradient {
    pub weights: [Vec<f64>; 3],
    pub bias: [f64; 3],
}

impl LogisticModel {
    pub fn zeros(dim: usize, params: LogisticParams) -> Self {
        LogisticModel {
            dim,
            weights: [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]],
            bias: [0.0; 3],
            params,
            loss_log: Vec::new(),
        }
    }

    pub fn logits(&self, x: &SparseVector) -> [f64; 3] {
        std::array::from_fn(|k| self.bias[k] + x.dot_dense(&self.weights[k]))
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<[f64; 3]> {
        check_dim(self.dim, x.dim)?;
        Ok(softmax(&self.logits(x)))
    }

    pub fn predict(&self, id: &str, x: &SparseVector) -> Result<PredictionRecord> {
        Ok(PredictionRecord::new(id, self.predict_proba(x)?))
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Mean cross-entropy plus `(l2 / 2) * ||W||^2`.
    pub fn objective(&self, examples: &[LabeledVector], l2: f64) -> f64 {
        let ce: f64 = examples
            .iter()
            .map(|(x, y)| cross_entropy(&self.logits(x), y.index()))
            .sum::<f64>()
            / examples.len().max(1) as f64;
        let sq: f64 = self.weights.iter().flatten().map(|w| w * w).sum();
        ce + 0.5 * l2 * sq
    }

    /// Analytic gradient of [`objective`](Self::objective).
    pub fn gradient(&self, examples: &[LabeledVector], l2: f64) -> LogisticGradient {
        let n = examples.len().max(1) as f64;
        let mut g = LogisticGradient {
            weights: self.weights.clone().map(|w| w.iter().map(|v| l2 * v).collect()),
            bias: [0.0; 3],
        };
        for (x, y) in examples {
            let mut diff = softmax(&self.logits(x));
            diff[y.index()] -= 1.0;
            for k in 0..3 {
                g.bias[k] += diff[k] / n;
                for &(i, v) in &x.entries {
                    g.weights[k][i] += diff[k] * v / n;
                }
            }
        }
        g
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("logistic model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: LogisticModel = serde_json::from_str(s)?;
        if m.weights.iter().any(|w| w.len() != m.dim) {
            return Err(Error::Data("logistic weight rows do not match dim".into()));
        }
        Ok(m)
    }
}

/// Seeded shuffled mini-batch gradient descent from a zero initialization.
pub fn train_logistic(examples: &[LabeledVector], params: &LogisticParams) -> Result<LogisticModel> {
    check_all_classes(examples.iter().map(|(_, y)| *y))?;
    let dim = examples[0].0.dim;
    if let Some((x, _)) = examples.iter().find(|(x, _)| x.dim != dim) {
        return Err(Error::Usage(format!("mixed feature dimensions {dim} and {}", x.dim)));
    }
    if params.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut model = LogisticModel::zeros(dim, params.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    let mut touched: Vec<usize> = Vec::new();
    let lr = params.learning_rate;

    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let scale = lr / batch.len() as f64;
            let mut grad_b = [0.0; 3];
            for &e in batch {
                let (x, y) = &examples[e];
                let mut diff = softmax(&model.logits(x));
                diff[y.index()] -= 1.0;
                for k in 0..3 {
                    grad_b[k] += diff[k];
                    for &(i, v) in &x.entries {
                        grad[k][i] += diff[k] * v;
                    }
                }
                touched.extend(x.entries.iter().map(|&(i, _)| i));
            }
            // W <- W - lr * (l2 * W + g / B), with the decay applied densely
            if params.l2 != 0.0 {
                let decay = 1.0 - lr * params.l2;
                for w in model.weights.iter_mut().flatten() {
                    *w *= decay;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &i in &touched {
                for k in 0..3 {
                    model.weights[k][i] -= scale * grad[k][i];
                    grad[k][i] = 0.0;
                }
            }
            touched.clear();
            for k in 0..3 {
                model.bias[k] -= scale * grad_b[k];
            }
        }
        let loss = model.objective(examples, params.l2);
        if !loss.is_finite() {
            return Err(Error::Training(format!("logistic loss diverged at epoch {}", epoch + 1)));
        }
        model.loss_log.push(loss);
    }
    Ok(model)
}
