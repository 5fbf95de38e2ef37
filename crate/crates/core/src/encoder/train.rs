use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, EncoderParams};
use super::vocab::TokenSequence;
use crate::baselines::check_all_classes;
use crate::error::{Error, Result};
use crate::market::PerformanceClass;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const WEIGHT_DECAY: f64 = 0.01;
pub const GRAD_CLIP: f64 = 1.0;

const DROPOUT_STREAM: u64 = 1 << 32;

/// Mean batch cross-entropy for one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// 1-based
    pub epoch: usize,
    /// 1-based, counted across epochs
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEncoder {
    pub model: EncoderModel,
    pub loss_log: Vec<LossRecord>,
}

struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    decay: Vec<bool>,
    t: i32,
}

impl AdamW {
    fn new(model: &EncoderModel) -> Self {
        let shapes = model.params().tensors();
        AdamW {
            m: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            decay: EncoderParams::layout(model.config()).iter().map(|i| i.decay).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut EncoderParams, grad: &EncoderParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (i, (p, g)) in params.tensors_mut().into_iter().zip(grad.tensors()).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let decay = if self.decay[i] { 1.0 - lr * WEIGHT_DECAY } else { 1.0 };
            for j in 0..p.len() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                let update = (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
                p[j] = p[j] * decay - lr * update;
            }
        }
    }
}

fn clip_global_norm(grad: &mut EncoderParams, max_norm: f64) -> f64 {
    let norm = grad
        .tensors()
        .iter()
        .map(|t| t.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

pub fn train_encoder(model: EncoderModel, examples: &[(TokenSequence, PerformanceClass)]) -> Result<TrainedEncoder> {
    train_encoder_with(model, examples, |_, _| Ok(()))
}

/// Trains for `config.epochs` epochs, calling `after_epoch(epoch, model)`
/// after each one. Shuffling and dropout depend only on `(seed, epoch)`, so
/// the model after epoch `e` equals a fresh `e`-epoch run.
pub fn train_encoder_with<F>(
    mut model: EncoderModel,
    examples: &[(TokenSequence, PerformanceClass)],
    mut after_epoch: F,
) -> Result<TrainedEncoder>
where
    F: FnMut(usize, &EncoderModel) -> Result<()>,
{
    check_all_classes(examples.iter().map(|(_, y)| *y))?;
    let config = model.config().clone();
    let max_len = config.max_seq_len;
    let examples: Vec<(TokenSequence, PerformanceClass)> = examples
        .iter()
        .map(|(s, y)| {
            let s = if s.len() > max_len { s.truncated(max_len) } else { s.clone() };
            (s, *y)
        })
        .collect();

    let mut opt = AdamW::new(&model);
    let mut grad = EncoderParams::zeros(&config);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut loss_log = Vec::new();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle.set_stream(epoch as u64);
        let mut dropout = ChaCha8Rng::seed_from_u64(config.seed);
        dropout.set_stream(DROPOUT_STREAM + epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut shuffle);

        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            step += 1;
            grad.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &e in batch {
                let (seq, label) = &examples[e];
                let cache = model.forward_cached(seq, Some(&mut dropout))?;
                loss += model.backward(&cache, *label, scale, &mut grad);
            }
            loss *= scale;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss in epoch {epoch}, batch {batch_index} (step {step})"
                )));
            }
            clip_global_norm(&mut grad, GRAD_CLIP);
            opt.step(model.params_mut(), &grad, config.learning_rate);
            loss_log.push(LossRecord { epoch, step, loss });
        }
        log::debug!("encoder epoch {epoch}: mean loss {:.4}", epoch_mean_losses(&loss_log).last().map_or(f64::NAN, |x| x.1));
        after_epoch(epoch, &model)?;
    }
    if !model.params().is_finite() {
        return Err(Error::Training("encoder parameters became non-finite".into()));
    }
    Ok(TrainedEncoder { model, loss_log })
}

/// `(epoch, mean step loss)` per epoch.
pub fn epoch_mean_losses(log: &[LossRecord]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in log {
        match out.last_mut() {
            Some(last) if last.0 == r.epoch => {
                last.1 += r.loss;
                last.2 += 1;
            }
            _ => out.push((r.epoch, r.loss, 1)),
        }
    }
    out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
}

/// CSV `epoch,step,loss`.
pub fn write_loss_log<W: Write>(log: &[LossRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, CLS_ID};

    fn data() -> Vec<(TokenSequence, PerformanceClass)> {
        (0..12)
            .map(|i| {
                let class = PerformanceClass::ALL[i % 3];
                let ids = vec![CLS_ID, 3 + class.index() as u32, 6 + (i % 4) as u32];
                (TokenSequence::new(ids, vec![1, 1, 1]).unwrap(), class)
            })
            .collect()
    }

    fn config() -> EncoderConfig {
        EncoderConfig {
            batch_size: 4,
            epochs: 3,
            learning_rate: 1e-2,
            ..EncoderConfig::tiny(12)
        }
    }

    #[test]
    fn reproducible_and_learning() {
        let a = train_encoder(EncoderModel::new(config()).unwrap(), &data()).unwrap();
        let b = train_encoder(EncoderModel::new(config()).unwrap(), &data()).unwrap();
        assert_eq!(a.loss_log, b.loss_log);
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_log.len(), 9);
        assert_eq!(a.loss_log.last().unwrap().step, 9);

        let long = EncoderConfig { epochs: 30, ..config() };
        let t = train_encoder(EncoderModel::new(long).unwrap(), &data()).unwrap();
        let means = epoch_mean_losses(&t.loss_log);
        assert!(means.last().unwrap().1 < 0.5 * means[0].1, "{means:?}");
    }

    #[test]
    fn epoch_prefix_equals_shorter_run() {
        let mut snapshots = Vec::new();
        train_encoder_with(EncoderModel::new(config()).unwrap(), &data(), |e, m| {
            snapshots.push((e, m.clone()));
            Ok(())
        })
        .unwrap();
        let two = train_encoder(EncoderModel::new(EncoderConfig { epochs: 2, ..config() }).unwrap(), &data()).unwrap();
        assert_eq!(snapshots[1].1.params(), two.model.params());
    }

    #[test]
    fn missing_class_and_truncation() {
        let only_two: Vec<_> = data().into_iter().filter(|(_, y)| *y != PerformanceClass::Under).collect();
        assert_eq!(
            train_encoder(EncoderModel::new(config()).unwrap(), &only_two).unwrap_err().exit_code(),
            2
        );
        let mut long = data();
        long[0].0 = TokenSequence::new(vec![CLS_ID, 3, 3, 3, 3, 3, 3, 3, 3], vec![1; 9]).unwrap();
        assert!(train_encoder(EncoderModel::new(config()).unwrap(), &long).is_ok());
    }

    #[test]
    fn non_finite_loss_reports_batch() {
        let mut m = EncoderModel::new(config()).unwrap();
        m.params_mut().classifier.bias[0] = f64::INFINITY;
        let err = train_encoder(m, &data()).unwrap_err();
        assert!(matches!(&err, Error::Training(msg) if msg.contains("batch 0")), "{err}");
    }

    #[test]
    fn loss_log_csv() {
        let log = vec![LossRecord { epoch: 1, step: 1, loss: 1.5 }];
        let mut buf = Vec::new();
        write_loss_log(&log, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,step,loss\n1,1,1.5\n");
    }
}
