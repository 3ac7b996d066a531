use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid model configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Normalisation scope of the entity-attention softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionScope {
    /// One softmax over every non-PAD token of the sentence.
    Sentence,
    /// A separate softmax inside each of the three parts.
    Part,
}

/// Every hyperparameter of the model and its training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub dist_dim: usize,
    /// Hidden size per direction of each lower BLSTM.
    pub lower_hidden: usize,
    /// Hidden size per direction of the upper BLSTM.
    pub upper_hidden: usize,
    /// Top-attention width; `None` means twice the upper hidden size.
    pub attention_width: Option<usize>,
    pub max_part_len: usize,
    pub dist_clip: usize,
    pub min_word_freq: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_split: f64,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Keep each `Other` training instance with this probability.
    pub negative_keep_ratio: Option<f64>,
    pub freeze_embeddings: bool,
    pub share_lower_weights: bool,
    /// `false` selects the literal cell without an output gate: `h = tanh(C)`.
    pub output_gate: bool,
    pub attention_scope: AttentionScope,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 100,
            pos_dim: 10,
            dist_dim: 10,
            lower_hidden: 100,
            upper_hidden: 100,
            attention_width: None,
            max_part_len: 100,
            dist_clip: 60,
            min_word_freq: 1,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            batch_size: 64,
            epochs: 101,
            validation_split: 0.1,
            seed: 7,
            grad_clip: Some(5.0),
            negative_keep_ratio: None,
            freeze_embeddings: false,
            share_lower_weights: false,
            output_gate: true,
            attention_scope: AttentionScope::Sentence,
        }
    }
}

impl ModelConfig {
    /// Tiny dimensions used by gradient checks.
    pub fn toy() -> Self {
        Self {
            word_dim: 4,
            pos_dim: 2,
            dist_dim: 2,
            lower_hidden: 3,
            upper_hidden: 3,
            max_part_len: 4,
            dist_clip: 5,
            ..Self::default()
        }
    }

    /// Width of one concatenated token vector.
    pub fn input_dim(&self) -> usize {
        self.word_dim + self.pos_dim + 2 * self.dist_dim
    }

    pub fn top_width(&self) -> usize {
        self.attention_width.unwrap_or(2 * self.upper_hidden)
    }

    /// Number of distance rows: PAD plus `-clip..=clip`.
    pub fn dist_buckets(&self) -> usize {
        2 * self.dist_clip + 2
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let dims = [
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("dist_dim", self.dist_dim),
            ("lower_hidden", self.lower_hidden),
            ("upper_hidden", self.upper_hidden),
            ("attention_width", self.top_width()),
            ("max_part_len", self.max_part_len),
            ("batch_size", self.batch_size),
            ("min_word_freq", self.min_word_freq),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ConfigError(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.validation_split) {
            return Err(ConfigError(format!(
                "validation_split must be in [0, 1), got {}",
                self.validation_split
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError("learning_rate must be positive".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(ConfigError("grad_clip must be positive".into()));
            }
        }
        if let Some(r) = self.negative_keep_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return Err(ConfigError("negative_keep_ratio must be in (0, 1]".into()));
            }
        }
        Ok(())
    }
}
