//! Entity-level attention over input tokens and top attention over the upper
//! BLSTM outputs.

use std::ops::Range;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::init;
use crate::tensor::{Result, Tensor, TensorError};

/// Output of entity attention on a tape.
#[derive(Debug, Clone)]
pub struct EntityAttention {
    pub alpha1: Var,
    pub alpha2: Var,
    /// `(alpha1 + alpha2) / 2`
    pub alpha: Var,
    /// `alpha_j * WV_j` for every position.
    pub scaled: Vec<Var>,
}

fn relatedness(
    tape: &mut Tape,
    entity: Var,
    word_vecs: &[Var],
    mask: &[bool],
    groups: &[Range<usize>],
) -> Result<Var> {
    let mut pieces = Vec::with_capacity(groups.len());
    for g in groups {
        let gmask = &mask[g.clone()];
        if !gmask.iter().any(|&m| m) {
            // An all-PAD part contributes zero weight under per-part scope.
            pieces.push(tape.constant(Tensor::zeros(&[g.len()])));
            continue;
        }
        let logits = word_vecs[g.clone()]
            .iter()
            .map(|&w| tape.inner(entity, w))
            .collect::<Result<Vec<_>>>()?;
        let logits = tape.concat(&logits)?;
        pieces.push(tape.softmax(logits, Some(gmask))?);
    }
    if pieces.len() == 1 {
        Ok(pieces[0])
    } else {
        tape.concat(&pieces)
    }
}

/// Weights each position by its averaged softmax relatedness to the two
/// entities, then scales the full token vector by that weight.
///
/// `groups` partitions the positions into independent softmax scopes; a single
/// `0..n` range normalises over the whole sentence.
pub fn entity_attention(
    tape: &mut Tape,
    word_vecs: &[Var],
    full_vecs: &[Var],
    e1: Var,
    e2: Var,
    mask: &[bool],
    groups: &[Range<usize>],
) -> Result<EntityAttention> {
    let n = word_vecs.len();
    if full_vecs.len() != n || mask.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "entity_attention",
            lhs: vec![n],
            rhs: vec![full_vecs.len(), mask.len()],
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(TensorError::InvalidMask { len: n });
    }
    let alpha1 = relatedness(tape, e1, word_vecs, mask, groups)?;
    let alpha2 = relatedness(tape, e2, word_vecs, mask, groups)?;
    let sum = tape.add(alpha1, alpha2)?;
    let alpha = tape.scale_const(sum, 0.5);
    let mut scaled = Vec::with_capacity(n);
    for (j, &wv) in full_vecs.iter().enumerate() {
        let a = tape.index(alpha, j)?;
        scaled.push(tape.scale(a, wv)?);
    }
    Ok(EntityAttention {
        alpha1,
        alpha2,
        alpha,
        scaled,
    })
}

/// Entity attention weights as plain vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityAttentionWeights {
    pub alpha1: Tensor,
    pub alpha2: Tensor,
    pub alpha_avg: Tensor,
    pub scaled: Vec<Tensor>,
}

/// Eager entity attention over a whole sentence.
pub fn entity_attention_weights(
    word_vecs: &[Tensor],
    full_vecs: &[Tensor],
    e1: &Tensor,
    e2: &Tensor,
    mask: &[bool],
) -> Result<EntityAttentionWeights> {
    let mut tape = Tape::new();
    let w: Vec<Var> = word_vecs.iter().map(|t| tape.constant(t.clone())).collect();
    let f: Vec<Var> = full_vecs.iter().map(|t| tape.constant(t.clone())).collect();
    let e1 = tape.constant(e1.clone());
    let e2 = tape.constant(e2.clone());
    let att = entity_attention(&mut tape, &w, &f, e1, e2, mask, &[0..w.len()])?;
    Ok(EntityAttentionWeights {
        alpha1: tape.value(att.alpha1).clone(),
        alpha2: tape.value(att.alpha2).clone(),
        alpha_avg: tape.value(att.alpha).clone(),
        scaled: att.scaled.iter().map(|&v| tape.value(v).clone()).collect(),
    })
}

/// Parameters of the top attention: `W [a, 2h]`, `b [a]`, `u [a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopAttentionParams<T = Tensor> {
    pub w: T,
    pub b: T,
    pub u: T,
}

impl<T> TopAttentionParams<T> {
    pub fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> TopAttentionParams<U> {
        TopAttentionParams {
            w: f(&format!("{prefix}.w"), &self.w),
            b: f(&format!("{prefix}.b"), &self.b),
            u: f(&format!("{prefix}.u"), &self.u),
        }
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{prefix}.w"), &mut self.w);
        f(&format!("{prefix}.b"), &mut self.b);
        f(&format!("{prefix}.u"), &mut self.u);
    }
}

impl TopAttentionParams {
    pub fn init<R: Rng>(width: usize, input: usize, rng: &mut R) -> Self {
        Self {
            w: init::glorot(width, input, rng),
            b: Tensor::zeros(&[width]),
            u: init::glorot_vector(width, rng),
        }
    }
}

/// Returns `(H2_att, beta_att)`. Each step is scored by
/// `u . tanh(W h_j + b)`, the scores are softmax-normalised over active steps,
/// and the output is the weighted sum of the rows.
pub fn top_attention(
    tape: &mut Tape,
    rows: &[Var],
    params: &TopAttentionParams<Var>,
    mask: &[bool],
) -> Result<(Var, Var)> {
    if rows.is_empty() || mask.len() != rows.len() {
        return Err(TensorError::ShapeMismatch {
            op: "top_attention",
            lhs: vec![rows.len()],
            rhs: vec![mask.len()],
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(TensorError::InvalidMask { len: mask.len() });
    }
    let mut scores = Vec::with_capacity(rows.len());
    for &h in rows {
        let proj = tape.matmul(params.w, h)?;
        let pre = tape.add(proj, params.b)?;
        let beta = tape.tanh(pre);
        scores.push(tape.inner(params.u, beta)?);
    }
    let scores = tape.concat(&scores)?;
    let beta_att = tape.softmax(scores, Some(mask))?;
    let mut terms = Vec::with_capacity(rows.len());
    for (j, &h) in rows.iter().enumerate() {
        if !mask[j] {
            continue;
        }
        let w = tape.index(beta_att, j)?;
        terms.push(tape.scale(w, h)?);
    }
    let out = tape.sum(&terms)?;
    Ok((out, beta_att))
}

/// Eager top attention over the rows of a `[T, 2h]` matrix.
pub fn top_attention_eager(
    h2: &Tensor,
    params: &TopAttentionParams,
    mask: &[bool],
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let rows: Vec<Var> = (0..h2.rows())
        .map(|r| tape.constant(Tensor::vector(h2.row(r).to_vec())))
        .collect();
    let p = params.map("top", &mut |_, t| tape.constant(t.clone()));
    let (out, beta) = top_attention(&mut tape, &rows, &p, mask)?;
    Ok((tape.value(out).clone(), tape.value(beta).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn identical_words_give_uniform_weights() {
        let w = vec![Tensor::vector(vec![0.3, -0.2]); 4];
        let f: Vec<Tensor> = (0..4).map(|k| Tensor::vector(vec![k as f64, 1.0, 2.0])).collect();
        let e = Tensor::vector(vec![1.0, 2.0]);
        let r = entity_attention_weights(&w, &f, &e, &e, &[true; 4]).unwrap();
        for a in [&r.alpha1, &r.alpha2, &r.alpha_avg] {
            for &v in a.data() {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
        for (k, s) in r.scaled.iter().enumerate() {
            for (x, y) in s.data().iter().zip(f[k].data()) {
                assert!((x - y / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn closed_form_two_positions() {
        // e1.wv = [ln 3, 0], e2.wv = [0, ln 3]
        let l3 = 3f64.ln();
        let w = vec![Tensor::vector(vec![l3, 0.0]), Tensor::vector(vec![0.0, l3])];
        let e1 = Tensor::vector(vec![1.0, 0.0]);
        let e2 = Tensor::vector(vec![0.0, 1.0]);
        let r = entity_attention_weights(&w, &w, &e1, &e2, &[true, true]).unwrap();
        let close = |t: &Tensor, want: [f64; 2]| {
            t.data().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12)
        };
        assert!(close(&r.alpha1, [0.75, 0.25]));
        assert!(close(&r.alpha2, [0.25, 0.75]));
        assert!(close(&r.alpha_avg, [0.5, 0.5]));
    }

    #[test]
    fn pad_positions_get_zero_weight_and_zero_output() {
        let w = vec![
            Tensor::vector(vec![0.0, 0.0]),
            Tensor::vector(vec![1.0, 0.5]),
            Tensor::vector(vec![-0.5, 2.0]),
        ];
        let e = Tensor::vector(vec![1.0, 1.0]);
        let r = entity_attention_weights(&w, &w, &e, &e, &[false, true, true]).unwrap();
        assert_eq!(r.alpha_avg.data()[0], 0.0);
        assert!(r.scaled[0].data().iter().all(|&v| v == 0.0));
        let err = entity_attention_weights(&w, &w, &e, &e, &[false; 3]).unwrap_err();
        assert!(matches!(err, TensorError::InvalidMask { .. }));
    }

    #[test]
    fn single_step_top_attention_is_that_row() {
        let mut rng = substream(5, "t");
        let p = TopAttentionParams::init(4, 6, &mut rng);
        let h = Tensor::matrix(1, 6, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (out, beta) = top_attention_eager(&h, &p, &[true]).unwrap();
        assert_eq!(beta.data(), &[1.0]);
        assert_eq!(out.data(), h.row(0));
    }

    #[test]
    fn zero_u_gives_row_mean() {
        let mut rng = substream(6, "t");
        let mut p = TopAttentionParams::init(4, 3, &mut rng);
        p.u = Tensor::zeros(&[4]);
        let h = Tensor::matrix(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (out, beta) = top_attention_eager(&h, &p, &[true; 5]).unwrap();
        for &b in beta.data() {
            assert!((b - 0.2).abs() < 1e-15);
        }
        for c in 0..3 {
            let mean: f64 = (0..5).map(|r| h.row(r)[c]).sum::<f64>() / 5.0;
            assert!((out.data()[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn all_pad_top_attention_fails() {
        let mut rng = substream(6, "t");
        let p = TopAttentionParams::init(2, 2, &mut rng);
        let h = Tensor::zeros(&[2, 2]);
        assert!(top_attention_eager(&h, &p, &[false, false]).is_err());
    }
}
