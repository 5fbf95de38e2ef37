//! Transformer encoder classifier: word-level vocabulary, learned positional
//! embeddings, post-norm blocks, tanh pooler on `[CLS]`, three-way head.
//! Gradients are derived by hand and trained with AdamW.

mod checkpoint;
mod layers;
mod model;
pub mod tensor;
mod train;
mod vocab;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use layers::{attention, gelu, normalize_rows, Attention, Normalized, LAYER_NORM_EPS};
pub use model::{EncoderLayer, EncoderModel, EncoderParams, LayerNorm, Linear, Mode, TensorInfo};
pub use train::{
    epoch_mean_losses, train_encoder, train_encoder_with, write_loss_log, LossRecord, TrainedEncoder, ADAM_BETA1,
    ADAM_BETA2, ADAM_EPS, GRAD_CLIP, WEIGHT_DECAY,
};
pub use vocab::{build_vocab, TokenSequence, TokenVocab, CLS_ID, PAD_ID, SPECIAL_TOKENS, UNK_ID};

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    #[serde(default)]
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    #[serde(default = "default_max_seq_len")]
    pub max_seq_len: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_seq_len() -> usize {
    200
}
fn default_dropout() -> f64 {
    0.1
}
fn default_learning_rate() -> f64 {
    1e-5
}
fn default_batch_size() -> usize {
    16
}
fn default_epochs() -> usize {
    1
}

impl EncoderConfig {
    /// Base-size dimensions with the reference fine-tuning hyperparameters.
    pub fn paper(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            d_model: 768,
            n_heads: 12,
            n_layers: 12,
            d_ff: 3072,
            max_seq_len: default_max_seq_len(),
            dropout: default_dropout(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            seed: 0,
        }
    }

    /// Small model trained from scratch; the higher learning rate makes up
    /// for the missing pretrained initialization.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            d_model: 128,
            n_heads: 4,
            n_layers: 2,
            d_ff: 512,
            learning_rate: 1e-3,
            epochs: 3,
            ..Self::paper(vocab_size)
        }
    }

    /// Gradient-check sized model.
    pub fn tiny(vocab_size: usize) -> Self {
        EncoderConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 32,
            max_seq_len: 6,
            learning_rate: 1e-3,
            ..Self::paper(vocab_size)
        }
    }

    pub fn preset(preset: EncoderPreset, vocab_size: usize) -> Self {
        match preset {
            EncoderPreset::Paper => Self::paper(vocab_size),
            EncoderPreset::Desk => Self::desk(vocab_size),
            EncoderPreset::Tiny => Self::tiny(vocab_size),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size < SPECIAL_TOKENS.len() {
            return bad(format!("vocab_size {} leaves no room for the special tokens", self.vocab_size));
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} must be a positive multiple of n_heads {}", self.d_model, self.n_heads));
        }
        if self.n_layers == 0 || self.d_ff == 0 {
            return bad("n_layers and d_ff must be positive".into());
        }
        if self.max_seq_len < 2 {
            return bad(format!("max_seq_len {} must be at least 2", self.max_seq_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderPreset {
    Paper,
    Desk,
    Tiny,
}

impl FromStr for EncoderPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(EncoderPreset::Paper),
            "desk" => Ok(EncoderPreset::Desk),
            "tiny" => Ok(EncoderPreset::Tiny),
            _ => Err(Error::Config(format!("unknown encoder preset {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [EncoderPreset::Paper, EncoderPreset::Desk, EncoderPreset::Tiny] {
            EncoderConfig::preset(p, 100).validate().unwrap();
        }
        let paper = EncoderConfig::paper(100);
        assert_eq!((paper.learning_rate, paper.batch_size, paper.max_seq_len, paper.epochs), (1e-5, 16, 200, 1));
        assert_eq!(paper.dropout, 0.1);
    }

    #[test]
    fn invalid_configs() {
        let base = EncoderConfig::desk(100);
        for c in [
            EncoderConfig { n_heads: 3, ..base.clone() },
            EncoderConfig { max_seq_len: 1, ..base.clone() },
            EncoderConfig { dropout: 1.0, ..base.clone() },
            EncoderConfig { vocab_size: 2, ..base.clone() },
            EncoderConfig { batch_size: 0, ..base.clone() },
        ] {
            assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        }
    }

    #[test]
    fn config_json_defaults() {
        let c: EncoderConfig = serde_json::from_str(r#"{"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32}"#).unwrap();
        assert_eq!(c.max_seq_len, 200);
        assert_eq!(c.learning_rate, 1e-5);
        assert_eq!("desk".parse::<EncoderPreset>().unwrap(), EncoderPreset::Desk);
    }
}
