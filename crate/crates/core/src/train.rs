//! Mini-batch training: shuffling, gradient accumulation, clipping and updates.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, OptimizerKind};
use crate::corpus::Label;
use crate::embeddings::PartitionedEncoding;
use crate::evaluation::{score, EvalReport};
use crate::model::{is_embedding, Model, ModelParams, Prediction};
use crate::rng::{stream, substream};
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training set is empty")]
    Empty,
    #[error("non-finite loss {loss} in epoch {epoch}, batch {batch} (first instance {sentence_id})")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
        sentence_id: String,
    },
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_macro_f1_4class: Option<f64>,
    pub val_macro_f1_5class: Option<f64>,
    pub wall_seconds: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss,val_loss,val_macro_f1_4class,val_macro_f1_5class,wall_seconds";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{:.6},{},{},{},{:.3}",
            self.epoch,
            self.train_loss,
            opt(self.val_loss),
            opt(self.val_macro_f1_4class),
            opt(self.val_macro_f1_5class),
            self.wall_seconds
        )
    }
}

/// Renders a full log as CSV.
pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from(EpochLog::CSV_HEADER);
    out.push('\n');
    for row in log {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

/// Returned by the per-epoch callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Write elapsed seconds into the log. Off by default so that logs of
    /// identical runs are byte-identical.
    pub record_wall_time: bool,
}

/// Adam or plain SGD over flat per-tensor buffers.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = match kind {
            OptimizerKind::Adam => params.named().iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. Tensors named in `skip` keep their values.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &[Vec<f64>], skip: impl Fn(&str) -> bool) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut k = 0;
        params.for_each_mut(&mut |name, tensor| {
            let idx = k;
            k += 1;
            if skip(name) {
                return;
            }
            let g = &grads[idx];
            let w = tensor.data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, g) in w.iter_mut().zip(g) {
                        *w -= self.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
                    for i in 0..w.len() {
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        w[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                    }
                }
            }
        });
    }
}

/// Euclidean norm over every buffer.
pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales all buffers so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let k = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= k);
    }
    norm
}

/// Holds out the trailing `fraction` of `data` for validation.
pub fn split_validation<T>(data: &[T], fraction: f64) -> (&[T], &[T]) {
    let n_val = (data.len() as f64 * fraction).floor() as usize;
    data.split_at(data.len() - n_val)
}

/// Keeps every positive instance and each `Other` instance with probability
/// `ratio`, drawing from the `sample` stream.
pub fn downsample_negatives(data: &[PartitionedEncoding], ratio: f64, seed: u64) -> Vec<&PartitionedEncoding> {
    let mut rng = substream(seed, stream::SAMPLE);
    data.iter()
        .filter(|e| e.label != Label::Other || rng.gen::<f64>() < ratio)
        .collect()
}

/// Predictions in input order.
pub fn predict_all(model: &Model, data: &[PartitionedEncoding]) -> Result<Vec<Prediction>, TensorError> {
    data.par_iter().map(|e| model.forward(e)).collect()
}

/// Mean loss and report of `model` on labeled data.
pub fn evaluate(model: &Model, data: &[PartitionedEncoding]) -> Result<(f64, EvalReport), TrainError> {
    let preds = predict_all(model, data)?;
    let loss = data
        .iter()
        .zip(&preds)
        .map(|(e, p)| -p.probs[e.label.index()].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / data.len() as f64;
    let gold: Vec<Label> = data.iter().map(|e| e.label).collect();
    let pred: Vec<Label> = preds.iter().map(|p| p.label).collect();
    let report = score(&gold, &pred).map_err(|e| TrainError::Config(ConfigError(e.to_string())))?;
    Ok((loss, report))
}

/// Mean loss over one batch and the averaged gradients. Instances are processed
/// concurrently in groups of the pool size and summed in input order, so the
/// result does not depend on the number of threads.
fn batch_gradients(model: &Model, batch: &[&PartitionedEncoding]) -> Result<(f64, Vec<Vec<f64>>), TensorError> {
    let mut acc = model.zero_grads();
    let mut loss = 0.0;
    let width = rayon::current_num_threads().max(1);
    for group in batch.chunks(width) {
        let results: Vec<_> = group.par_iter().map(|e| model.loss_and_grads(e)).collect();
        for r in results {
            let r = r?;
            loss += r.loss;
            r.accumulate(&mut acc);
        }
    }
    let k = 1.0 / batch.len() as f64;
    acc.iter_mut().flatten().for_each(|g| *g *= k);
    model.clear_pad_rows(&mut acc);
    Ok((loss * k, acc))
}

/// Trains `model` in place on `data`, holding out the trailing validation
/// fraction for monitoring. `on_epoch` sees each log row and may stop early.
pub fn train(
    model: &mut Model,
    data: &[PartitionedEncoding],
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog, &Model) -> Control,
) -> Result<Vec<EpochLog>, TrainError> {
    let cfg = model.config.clone();
    cfg.validate()?;
    let (train_part, val_part) = split_validation(data, cfg.validation_split);
    let pool: Vec<&PartitionedEncoding> = match cfg.negative_keep_ratio {
        Some(r) => downsample_negatives(train_part, r, cfg.seed),
        None => train_part.iter().collect(),
    };
    if pool.is_empty() {
        return Err(TrainError::Empty);
    }

    let mut rng = substream(cfg.seed, stream::SHUFFLE);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model.params);
    let frozen = cfg.freeze_embeddings;
    let start = Instant::now();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..pool.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PartitionedEncoding> = idx.iter().map(|&i| pool[i]).collect();
            let (loss, mut grads) = batch_gradients(model, &batch)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    loss,
                    sentence_id: batch[0].sentence_id.clone(),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut grads, c);
            }
            optimizer.apply(&mut model.params, &grads, |name| frozen && is_embedding(name));
        }
        let (val_loss, f4, f5) = if val_part.is_empty() {
            (None, None, None)
        } else {
            let (l, r) = evaluate(model, val_part)?;
            (Some(l), Some(r.macro4.f1), Some(r.macro5.f1))
        };
        let row = EpochLog {
            epoch,
            train_loss: epoch_loss / pool.len() as f64,
            val_loss,
            val_macro_f1_4class: f4,
            val_macro_f1_5class: f5,
            wall_seconds: if opts.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        log::info!("{}", row.csv_row());
        let control = on_epoch(&row, model);
        log.push(row);
        if control == Control::Stop {
            break;
        }
    }
    Ok(log)
}
