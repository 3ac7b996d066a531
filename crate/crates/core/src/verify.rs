//! Self-contained verification suites: finite-difference gradient checks,
//! closed-form oracles and randomized invariant checks.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::attention::{entity_attention_weights, top_attention_eager, TopAttentionParams};
use crate::autodiff::Tape;
use crate::config::{AttentionScope, ModelConfig};
use crate::corpus::{
    distance_to_span, partition, tokenize_and_distance, EntityMention, Label, PairAnnotation, PairInstance,
    PosSource, Sentence, Token, TokenSpan,
};
use crate::embeddings::{PartEncoding, PartitionedEncoding, Vocabulary, PAD};
use crate::evaluation::{score, EvalReport};
use crate::model::Model;
use crate::recurrent::{blstm_forward, lstm_step, lstm_unroll, Blstm, LstmCell, LstmState};
use crate::rng::{substream, StreamRng};
use crate::tensor::{sigmoid_scalar, softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    Oracle,
    Properties,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Gradcheck, Suite::Oracle, Suite::Properties];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradcheck => "gradcheck",
            Suite::Oracle => "oracle",
            Suite::Properties => "properties",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?} (expected gradcheck, oracle or properties)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "[{tag}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> SuiteReport {
    let checks = match suite {
        Suite::Gradcheck => gradcheck_suite(seed),
        Suite::Oracle => oracle_suite(seed),
        Suite::Properties => properties_suite(seed),
    };
    SuiteReport {
        suite: suite.name(),
        checks,
    }
}

// ---------------------------------------------------------------------------
// Gradient check

/// `|a - b| / max(|a|, |b|, 1e-6)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Toy vocabulary: PAD, UNK and 18 words.
pub fn toy_vocabulary() -> Vocabulary {
    let mut words = vec!["<pad>".to_string(), "<unk>".to_string()];
    words.extend((2..20).map(|i| format!("w{i}")));
    let pos = ["<pad>", "<unk>", "NN", "VB", "JJ", "IN"].map(String::from).to_vec();
    Vocabulary::from_lists(words, pos, 1).expect("well-formed lists")
}

/// Random encoding whose parts respect `cfg.max_part_len`. Before and after
/// parts may be PAD-only; the between part starts with e1 and ends with e2.
pub fn random_encoding<R: Rng>(rng: &mut R, vocab: &Vocabulary, cfg: &ModelConfig) -> PartitionedEncoding {
    let max = cfg.max_part_len.max(2);
    let buckets = cfg.dist_buckets();
    let mut part = |len: usize, allow_pad: bool| {
        if allow_pad && rng.gen_bool(0.25) {
            return PartEncoding {
                words: vec![PAD],
                pos: vec![PAD],
                dist: vec![(PAD, PAD)],
            };
        }
        PartEncoding {
            words: (0..len).map(|_| rng.gen_range(1..vocab.word_count())).collect(),
            pos: (0..len).map(|_| rng.gen_range(1..vocab.pos_count())).collect(),
            dist: (0..len)
                .map(|_| (rng.gen_range(1..buckets), rng.gen_range(1..buckets)))
                .collect(),
        }
    };
    let b_len = 1 + (max - 1).min(3);
    let before = part(b_len, true);
    let between = part(2.max(max.min(4)), false);
    let after = part(b_len, true);
    let e1_words = vec![between.words[0]];
    let e2_words = between.words[between.words.len() - 1..].to_vec();
    PartitionedEncoding {
        sentence_id: "random".into(),
        parts: [before, between, after],
        e1_words,
        e2_words,
        label: Label::from_index(rng.gen_range(0..Label::COUNT)).unwrap(),
    }
}

/// Largest relative error of one tensor's gradient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub worst: String,
}

fn mean_loss(model: &Model, data: &[PartitionedEncoding]) -> f64 {
    data.iter().map(|e| model.loss(e).expect("forward")).sum::<f64>() / data.len() as f64
}

/// Compares every element of every parameter gradient with a central finite
/// difference of step `h` on the mean loss over a few random instances.
pub fn gradcheck(cfg: &ModelConfig, instances: usize, h: f64) -> GradcheckReport {
    let vocab = toy_vocabulary();
    let model = Model::new(cfg.clone(), vocab.clone());
    let mut rng = substream(cfg.seed, "gradcheck");
    let data: Vec<PartitionedEncoding> = (0..instances)
        .map(|_| random_encoding(&mut rng, &vocab, cfg))
        .collect();

    let mut analytic = model.zero_grads();
    for e in &data {
        model.loss_and_grads(e).expect("backward").accumulate(&mut analytic);
    }
    model.clear_pad_rows(&mut analytic);
    let k = 1.0 / data.len() as f64;
    analytic.iter_mut().flatten().for_each(|g| *g *= k);

    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    let mut tensors = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = analytic[ti].len();
        let mut worst: f64 = 0.0;
        for i in 0..len {
            let numeric = {
                let probe = |delta: f64| {
                    let mut m = model.clone();
                    let mut k = 0;
                    m.params.for_each_mut(&mut |_, t| {
                        if k == ti {
                            t.data_mut()[i] += delta;
                        }
                        k += 1;
                    });
                    mean_loss(&m, &data)
                };
                (probe(h) - probe(-h)) / (2.0 * h)
            };
            worst = worst.max(relative_error(analytic[ti][i], numeric));
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            elements: len,
            max_rel_error: worst,
        });
    }
    let (worst, max_rel_error) = tensors
        .iter()
        .fold((String::new(), 0.0f64), |(n, e), t| {
            if t.max_rel_error > e {
                (t.name.clone(), t.max_rel_error)
            } else {
                (n, e)
            }
        });
    GradcheckReport {
        tensors,
        max_rel_error,
        worst,
    }
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;

fn gradcheck_suite(seed: u64) -> Vec<Check> {
    let base = ModelConfig {
        seed,
        ..ModelConfig::toy()
    };
    let variants = [
        ("gradcheck.default", base.clone()),
        (
            "gradcheck.no_output_gate_part_scope",
            ModelConfig {
                output_gate: false,
                attention_scope: AttentionScope::Part,
                ..base.clone()
            },
        ),
        (
            "gradcheck.shared_lower_weights",
            ModelConfig {
                share_lower_weights: true,
                ..base
            },
        ),
    ];
    variants
        .into_iter()
        .map(|(name, cfg)| {
            let r = gradcheck(&cfg, 3, GRADCHECK_STEP);
            let n: usize = r.tensors.iter().map(|t| t.elements).sum();
            Check::new(
                name,
                r.max_rel_error < GRADCHECK_TOLERANCE,
                format!(
                    "{} tensors, {n} elements, max relative error {:.3e} ({})",
                    r.tensors.len(),
                    r.max_rel_error,
                    r.worst
                ),
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Oracles

/// Plain-arithmetic one-dimensional LSTM step, independent of the tape.
/// `w = [w_f, w_i, w_g, w_o]` as `(recurrent, input)` pairs, `b` likewise.
pub fn scalar_lstm_reference(w: [(f64, f64); 4], b: [f64; 4], h0: f64, c0: f64, x: f64) -> (f64, f64) {
    let pre = |k: usize| w[k].0 * h0 + w[k].1 * x + b[k];
    let f = sigmoid_scalar(pre(0));
    let i = sigmoid_scalar(pre(1));
    let g = pre(2).tanh();
    let o = sigmoid_scalar(pre(3));
    let c = f * c0 + i * g;
    (o * c.tanh(), c)
}

/// Largest absolute deviation between `lstm_step` and the scalar reference
/// over `cases` random parameterizations.
pub fn scalar_lstm_max_error(seed: u64, cases: usize) -> f64 {
    let mut rng = substream(seed, "scalar-lstm");
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let mut r = || rng.gen_range(-3.0..3.0);
        let w = [(r(), r()), (r(), r()), (r(), r()), (r(), r())];
        let b = [r(), r(), r(), r()];
        let (h0, c0, x) = (r(), r(), r());
        let m = |k: usize| Tensor::matrix(1, 2, vec![w[k].0, w[k].1]).unwrap();
        let cell = LstmCell {
            w_f: m(0),
            w_i: m(1),
            w_g: m(2),
            w_o: Some(m(3)),
            b_f: Tensor::vector(vec![b[0]]),
            b_i: Tensor::vector(vec![b[1]]),
            b_g: Tensor::vector(vec![b[2]]),
            b_o: Some(Tensor::vector(vec![b[3]])),
        };
        let mut tape = Tape::new();
        let cv = cell.map("c", &mut |_, t| tape.constant(t.clone()));
        let s0 = LstmState {
            h: tape.constant(Tensor::vector(vec![h0])),
            c: tape.constant(Tensor::vector(vec![c0])),
        };
        let xv = tape.constant(Tensor::vector(vec![x]));
        let s1 = lstm_step(&mut tape, &cv, s0, xv).expect("shapes agree");
        let (h_ref, c_ref) = scalar_lstm_reference(w, b, h0, c0, x);
        worst = worst
            .max((tape.value(s1.h).item() - h_ref).abs())
            .max((tape.value(s1.c).item() - c_ref).abs());
    }
    worst
}

fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.gen_range(-scale..scale)).collect())
}

/// Backward half of every BLSTM row equals a forward pass of the backward
/// cell over the reversed input, bit for bit.
pub fn reversal_duality_holds(seed: u64, cases: usize) -> bool {
    let mut rng = substream(seed, "reversal");
    (0..cases).all(|_| {
        let (h, d, t) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..7));
        let b = Blstm::init(h, d, rng.gen_bool(0.5), &mut rng);
        let xs: Vec<Tensor> = (0..t).map(|_| random_vec(&mut rng, d, 1.0)).collect();
        let mut tape = Tape::new();
        let bv = b.map("b", &mut |_, x| tape.constant(x.clone()));
        let x: Vec<_> = xs.iter().map(|v| tape.constant(v.clone())).collect();
        let rows = blstm_forward(&mut tape, &bv, &x).expect("non-empty");
        let mut tape2 = Tape::new();
        let cell = b.bwd.map("c", &mut |_, x| tape2.constant(x.clone()));
        let xr: Vec<_> = xs.iter().rev().map(|v| tape2.constant(v.clone())).collect();
        let outs = lstm_unroll(&mut tape2, &cell, &xr).expect("shapes agree");
        rows.iter().enumerate().all(|(k, &r)| {
            let got = &tape.value(r).data()[h..];
            let want = tape2.value(outs[t - 1 - k]).data();
            got.iter().zip(want).all(|(a, b)| a.to_bits() == b.to_bits())
        })
    })
}

/// Compares the report on random label sequences with direct tp/fp/fn counting.
pub fn metrics_match_hand_count(seed: u64, cases: usize) -> bool {
    let mut rng = substream(seed, "metrics");
    (0..cases).all(|_| {
        let n = rng.gen_range(1..40);
        let draw = |rng: &mut StreamRng| Label::from_index(rng.gen_range(0..Label::COUNT)).unwrap();
        let gold: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let pred: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let r = score(&gold, &pred).expect("non-empty");
        Label::ALL.iter().all(|&c| {
            let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
            for (g, p) in gold.iter().zip(&pred) {
                match (*g == c, *p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let rc = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let m = r.class(c);
            m.precision == p && m.recall == rc
        })
    })
}

/// Published per-class precision and recall in label order.
pub const PUBLISHED_PER_CLASS: [(f64, f64); Label::COUNT] = [
    (0.772, 0.873),
    (0.734, 0.819),
    (0.818, 0.745),
    (0.776, 0.469),
    (0.968, 0.967),
];

pub fn published_report() -> EvalReport {
    EvalReport::from_precision_recall(PUBLISHED_PER_CLASS).expect("values in range")
}

/// The worked distance example: returns `[dist_e1, dist_e2]` of "effect".
pub fn worked_distance_example() -> [i64; 2] {
    let text = "Acitretin interferes with the contraceptive effect of progestin preparations.";
    let find = |w: &str| text.find(w).expect("word present");
    let mention = |id: &str, w: &str| EntityMention {
        id: id.into(),
        char_start: find(w),
        char_end: find(w) + w.len(),
        surface: w.into(),
    };
    let sentence = Sentence {
        id: "worked.s0".into(),
        text: text.into(),
        entities: vec![mention("e0", "Acitretin"), mention("e1", "progestin")],
        pairs: vec![PairAnnotation {
            id: "worked.s0.p0".into(),
            e1: "e0".into(),
            e2: "e1".into(),
            label: Label::Effect,
        }],
    };
    let inst = tokenize_and_distance(&sentence, &sentence.pairs[0], &PosSource::Fallback).expect("aligned");
    let t = inst.tokens.iter().find(|t| t.surface == "effect").expect("token present");
    [t.dist_e1, t.dist_e2]
}

fn oracle_suite(seed: u64) -> Vec<Check> {
    let lstm = scalar_lstm_max_error(seed, 100);
    let pub_report = published_report();
    let dist = worked_distance_example();
    let closed_form = {
        let l3 = 3f64.ln();
        let w = vec![Tensor::vector(vec![l3, 0.0]), Tensor::vector(vec![0.0, l3])];
        let e1 = Tensor::vector(vec![1.0, 0.0]);
        let e2 = Tensor::vector(vec![0.0, 1.0]);
        let r = entity_attention_weights(&w, &w, &e1, &e2, &[true, true]).expect("valid mask");
        (r.alpha1.data()[0] - 0.75).abs() < 1e-12 && (r.alpha_avg.data()[0] - 0.5).abs() < 1e-12
    };
    vec![
        Check::new(
            "oracle.scalar_lstm",
            lstm < 1e-12,
            format!("100 random cells, max deviation {lstm:.3e}"),
        ),
        Check::new(
            "oracle.reversal_duality",
            reversal_duality_holds(seed, 100),
            "backward direction equals forward cell on reversed input (bitwise)",
        ),
        Check::new(
            "oracle.metrics_hand_count",
            metrics_match_hand_count(seed, 200),
            "per-class precision and recall equal direct tp/fp/fn counts",
        ),
        Check::new(
            "oracle.published_macro",
            (pub_report.macro5.f1 - 0.785).abs() <= 0.0005 && (pub_report.macro5.recall - 0.775).abs() <= 0.001,
            format!(
                "macro5 F1 {:.4}, macro5 recall {:.4}",
                pub_report.macro5.f1, pub_report.macro5.recall
            ),
        ),
        Check::new(
            "oracle.worked_distance",
            dist == [5, -2],
            format!("dist(effect) = {dist:?}"),
        ),
        Check::new("oracle.attention_closed_form", closed_form, "ln 3 logits give weights 3/4, 1/4"),
    ]
}

// ---------------------------------------------------------------------------
// Randomized properties

fn random_mask<R: Rng>(rng: &mut R, n: usize) -> Vec<bool> {
    let mut m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    let k = rng.gen_range(0..n);
    m[k] = true;
    m
}

fn is_distribution(p: &[f64], mask: &[bool]) -> bool {
    let sum: f64 = p.iter().sum();
    (sum - 1.0).abs() <= 1e-9
        && p.iter().all(|&x| x >= 0.0)
        && p.iter().zip(mask).all(|(&x, &m)| m || x == 0.0)
}

/// Masked softmax yields a distribution with zeros on masked slots.
pub fn softmax_property(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = substream(seed, "prop-softmax");
    for case in 0..cases {
        let n = rng.gen_range(1..12);
        let scale = [1.0, 50.0, 800.0][rng.gen_range(0..3)];
        let x = random_vec(&mut rng, n, scale);
        let mask = random_mask(&mut rng, n);
        let p = softmax(&x, Some(&mask)).map_err(|e| e.to_string())?;
        if !is_distribution(p.data(), &mask) {
            return Err(format!("case {case}: {:?}", p.data()));
        }
    }
    Ok(())
}

/// alpha1, alpha2 and their average are distributions with PAD weight 0.
pub fn entity_attention_property(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = substream(seed, "prop-entity");
    for case in 0..cases {
        let n = rng.gen_range(1..15);
        let d = rng.gen_range(1..6);
        let mask = random_mask(&mut rng, n);
        let words: Vec<Tensor> = mask
            .iter()
            .map(|&m| if m { random_vec(&mut rng, d, 2.0) } else { Tensor::zeros(&[d]) })
            .collect();
        let full: Vec<Tensor> = words.iter().map(|w| {
            let mut v = w.data().to_vec();
            v.push(1.0);
            Tensor::vector(v)
        }).collect();
        let e1 = random_vec(&mut rng, d, 2.0);
        let e2 = random_vec(&mut rng, d, 2.0);
        let r = entity_attention_weights(&words, &full, &e1, &e2, &mask).map_err(|e| e.to_string())?;
        for (label, a) in [("alpha1", &r.alpha1), ("alpha2", &r.alpha2), ("alpha", &r.alpha_avg)] {
            if !is_distribution(a.data(), &mask) {
                return Err(format!("case {case}: {label} = {:?}", a.data()));
            }
        }
    }
    Ok(())
}

/// beta is a distribution with PAD weight 0 and the attended vector lies in
/// the componentwise hull of the active rows.
pub fn top_attention_property(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = substream(seed, "prop-top");
    for case in 0..cases {
        let t = rng.gen_range(1..12);
        let w2 = 2 * rng.gen_range(1..4);
        let a = rng.gen_range(1..6);
        let mut params = TopAttentionParams::init(a, w2, &mut rng);
        params.u = random_vec(&mut rng, a, 4.0);
        params.b = random_vec(&mut rng, a, 1.0);
        let rows: Vec<f64> = (0..t * w2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h2 = Tensor::matrix(t, w2, rows).expect("shape");
        let mask = random_mask(&mut rng, t);
        let (out, beta) = top_attention_eager(&h2, &params, &mask).map_err(|e| e.to_string())?;
        if !is_distribution(beta.data(), &mask) {
            return Err(format!("case {case}: beta = {:?}", beta.data()));
        }
        for c in 0..w2 {
            let active = (0..t).filter(|&r| mask[r]).map(|r| h2.row(r)[c]);
            let (lo, hi) = active.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let v = out.data()[c];
            if v < lo - 1e-12 || v > hi + 1e-12 {
                return Err(format!("case {case}: component {c} = {v} outside [{lo}, {hi}]"));
            }
        }
    }
    Ok(())
}

/// Random well-formed instance with `2..=max_len` tokens.
pub fn random_instance<R: Rng>(rng: &mut R, max_len: usize, id: usize) -> PairInstance {
    let n = rng.gen_range(2..=max_len.max(2));
    let a = rng.gen_range(0..n - 1);
    let b = rng.gen_range(a..n - 1);
    let c = rng.gen_range(b + 1..n);
    let d = rng.gen_range(c..n);
    let (e1, e2) = (TokenSpan::new(a, b), TokenSpan::new(c, d));
    let tokens = (0..n)
        .map(|i| Token {
            surface: format!("t{}", rng.gen_range(0..50)),
            pos_tag: "NN".into(),
            dist_e1: distance_to_span(i, e1),
            dist_e2: distance_to_span(i, e2),
            pad: false,
        })
        .collect();
    PairInstance {
        sentence_id: format!("random.{id}"),
        tokens,
        e1_span: e1,
        e2_span: e2,
        label: Label::from_index(rng.gen_range(0..Label::COUNT)).unwrap(),
    }
}

/// Partitioning then dropping PAD gives back the original tokens, and the
/// entities sit at the ends of the between part.
pub fn partition_property(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = substream(seed, "prop-partition");
    for case in 0..cases {
        let inst = random_instance(&mut rng, 20, case);
        inst.validate().map_err(|e| format!("case {case}: generator: {e}"))?;
        let p = partition(&inst);
        if p.reconstruct() != inst.tokens {
            return Err(format!("case {case}: reconstruction differs"));
        }
        if p.e1_span.start != 0 || p.e2_span.end + 1 != p.between.len() {
            return Err(format!("case {case}: entities not at the ends of the between part"));
        }
        for part in p.parts() {
            if part.is_empty() || (part.len() > 1 && part.iter().any(|t| t.pad)) {
                return Err(format!("case {case}: malformed padding"));
            }
        }
    }
    Ok(())
}

fn properties_suite(seed: u64) -> Vec<Check> {
    let as_check = |name: &str, r: Result<(), String>| match r {
        Ok(()) => Check::new(name, true, "1000 cases"),
        Err(e) => Check::new(name, false, e),
    };
    vec![
        as_check("properties.softmax", softmax_property(seed, 1000)),
        as_check("properties.entity_attention", entity_attention_property(seed, 1000)),
        as_check("properties.top_attention", top_attention_property(seed, 1000)),
        as_check("properties.partition", partition_property(seed, 1000)),
    ]
}
