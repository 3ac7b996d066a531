//! The full classifier: parameters, forward pass and per-instance gradients.

use rand::Rng;
use serde::Serialize;

use crate::attention::{entity_attention, top_attention, TopAttentionParams};
use crate::autodiff::{Gradients, Tape, Var};
use crate::config::ModelConfig;
use crate::corpus::Label;
use crate::embeddings::{attention_groups, embed_on_tape, EmbeddingTables, PartitionedEncoding, Vocabulary, PAD};
use crate::init;
use crate::recurrent::{hierarchical_forward, Hierarchy};
use crate::rng::{stream, substream};
use crate::tensor::{Result, Tensor};

/// Every learnable tensor of the model. `T` is `Tensor` for stored values and
/// `Var` once bound to a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub embeddings: EmbeddingTables<T>,
    pub hierarchy: Hierarchy<T>,
    pub top: TopAttentionParams<T>,
    /// `[5, 2 h2]`
    pub dense_w: T,
    pub dense_b: T,
}

impl<T> ModelParams<T> {
    /// Applies `f` to every tensor with its dotted name, in canonical order.
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&str, &'a T) -> U) -> ModelParams<U> {
        ModelParams {
            embeddings: self.embeddings.map("embed", f),
            hierarchy: self.hierarchy.map(f),
            top: self.top.map("top", f),
            dense_w: f("dense.w", &self.dense_w),
            dense_b: f("dense.b", &self.dense_b),
        }
    }

    /// Same order as [`ModelParams::map`].
    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
        self.embeddings.for_each_mut("embed", f);
        self.hierarchy.for_each_mut(f);
        self.top.for_each_mut("top", f);
        f("dense.w", &mut self.dense_w);
        f("dense.b", &mut self.dense_b);
    }

    /// `(name, tensor)` pairs in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(&mut |name, t| out.push((name.to_string(), t)));
        out
    }
}

pub fn is_embedding(name: &str) -> bool {
    name.starts_with("embed.")
}

impl ModelParams {
    pub fn init<R: Rng>(vocab: &Vocabulary, cfg: &ModelConfig, rng: &mut R) -> Self {
        let embeddings = EmbeddingTables::init(vocab, cfg, rng);
        let hierarchy = Hierarchy::init(
            cfg.input_dim(),
            cfg.lower_hidden,
            cfg.upper_hidden,
            cfg.share_lower_weights,
            cfg.output_gate,
            rng,
        );
        let top = TopAttentionParams::init(cfg.top_width(), 2 * cfg.upper_hidden, rng);
        let dense_w = init::glorot(Label::COUNT, 2 * cfg.upper_hidden, rng);
        Self {
            embeddings,
            hierarchy,
            top,
            dense_w,
            dense_b: Tensor::zeros(&[Label::COUNT]),
        }
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Registers every tensor on `tape`. Embedding tables become constants
    /// when `frozen`, everything else is differentiable iff `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool, frozen_embeddings: bool) -> ModelParams<Var> {
        self.map(&mut |name, t| {
            if trainable && !(frozen_embeddings && is_embedding(name)) {
                tape.leaf(t.clone().requiring_grad(true))
            } else {
                tape.constant(t.clone())
            }
        })
    }
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logits: Var,
    pub probs: Var,
    pub alpha1: Var,
    pub alpha2: Var,
    pub alpha: Var,
    pub beta: Var,
}

/// embedding → entity attention → part-wise BLSTMs → upper BLSTM → top
/// attention → dense softmax.
pub fn forward_on_tape(
    tape: &mut Tape,
    params: &ModelParams<Var>,
    enc: &PartitionedEncoding,
    cfg: &ModelConfig,
) -> Result<ForwardVars> {
    let seq = embed_on_tape(tape, &params.embeddings, enc)?;
    let groups = attention_groups(seq.part_lens, cfg.attention_scope);
    let att = entity_attention(
        tape,
        &seq.word_vecs,
        &seq.full_vecs,
        seq.e1,
        seq.e2,
        &seq.mask,
        &groups,
    )?;
    let [b, m, _] = seq.part_lens;
    let (before, rest) = att.scaled.split_at(b);
    let (between, after) = rest.split_at(m);
    let h = hierarchical_forward(tape, &params.hierarchy, [before, between, after])?;
    let (sentence, beta) = top_attention(tape, &h.upper, &params.top, &seq.mask)?;
    let proj = tape.matmul(params.dense_w, sentence)?;
    let logits = tape.add(proj, params.dense_b)?;
    let probs = tape.softmax(logits, None)?;
    Ok(ForwardVars {
        logits,
        probs,
        alpha1: att.alpha1,
        alpha2: att.alpha2,
        alpha: att.alpha,
        beta,
    })
}

/// Class probabilities plus the attention weights behind them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: Label,
    pub probs: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Loss, gradients and the tape handles needed to read them.
pub struct InstanceGrads {
    pub loss: f64,
    pub grads: Gradients,
    pub vars: ModelParams<Var>,
}

impl InstanceGrads {
    /// Adds every parameter gradient into `acc` (one buffer per tensor, in
    /// canonical order).
    pub fn accumulate(&self, acc: &mut [Vec<f64>]) {
        for ((_, &v), buf) in self.vars.named().into_iter().zip(acc.iter_mut()) {
            self.grads.accumulate_into(v, buf);
        }
    }
}

/// Configuration, vocabulary and parameters of a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

impl Model {
    /// Fresh parameters drawn from the `init` stream of `config.seed`.
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Self {
        let mut rng = substream(config.seed, stream::INIT);
        let params = ModelParams::init(&vocab, &config, &mut rng);
        Self {
            config,
            vocab,
            params,
        }
    }

    pub fn forward(&self, enc: &PartitionedEncoding) -> Result<Prediction> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false, false);
        let out = forward_on_tape(&mut tape, &vars, enc, &self.config)?;
        let probs = tape.value(out.probs).data().to_vec();
        Ok(Prediction {
            label: Label::from_index(argmax(&probs)).expect("five classes"),
            probs,
            alpha1: tape.value(out.alpha1).data().to_vec(),
            alpha2: tape.value(out.alpha2).data().to_vec(),
            alpha: tape.value(out.alpha).data().to_vec(),
            beta: tape.value(out.beta).data().to_vec(),
        })
    }

    pub fn predict(&self, enc: &PartitionedEncoding) -> Result<Label> {
        Ok(self.forward(enc)?.label)
    }

    /// Cross-entropy of the gold label.
    pub fn loss(&self, enc: &PartitionedEncoding) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false, false);
        let out = forward_on_tape(&mut tape, &vars, enc, &self.config)?;
        let loss = tape.cross_entropy(out.logits, enc.label.index())?;
        Ok(tape.value(loss).item())
    }

    pub fn loss_and_grads(&self, enc: &PartitionedEncoding) -> Result<InstanceGrads> {
        let mut tape = Tape::new();
        let vars = self
            .params
            .bind(&mut tape, true, self.config.freeze_embeddings);
        let out = forward_on_tape(&mut tape, &vars, enc, &self.config)?;
        let loss = tape.cross_entropy(out.logits, enc.label.index())?;
        let grads = tape.backward(loss)?;
        Ok(InstanceGrads {
            loss: tape.value(loss).item(),
            grads,
            vars,
        })
    }

    /// Clears the PAD rows of the embedding-table gradients so PAD vectors stay zero.
    pub fn clear_pad_rows(&self, acc: &mut [Vec<f64>]) {
        for ((name, t), buf) in self.params.named().into_iter().zip(acc.iter_mut()) {
            if is_embedding(&name) {
                let cols = t.cols();
                buf[PAD * cols..(PAD + 1) * cols].fill(0.0);
            }
        }
    }

    /// Zeroed gradient buffers matching [`ModelParams::named`].
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params
            .named()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect()
    }
}
