//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive appends one node holding its forward value. `backward` walks
//! the tape in reverse, so inputs always precede the nodes that consume them.
//! Leaves are registered from [`Tensor`]s; a leaf participates in
//! differentiation iff its tensor has `requires_grad` set.

use std::collections::{BTreeMap, HashMap};

use crate::tensor::{self, dot, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    /// `[1]`-shaped scalar times a tensor.
    Scale(Var, Var),
    ScaleConst(Var, f64),
    Inner(Var, Var),
    Concat(Vec<Var>),
    Sum(Vec<Var>),
    Index(Var, usize),
    Gather(Var, usize),
    Softmax(Var),
    CrossEntropy(Var, usize, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Operation record for a single forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Registers a tensor; it is differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let g = t.requires_grad();
        self.push(t, Op::Leaf, g)
    }

    /// Registers a tensor that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.requiring_grad(false), Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add(self.value(a), self.value(b))?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), g))
    }

    pub fn add_row_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let out = tensor::add_row_bias(self.value(m), self.value(bias))?;
        let g = self.needs(m) || self.needs(bias);
        Ok(self.push(out, Op::AddRowBias(m, bias), g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::mul(self.value(a), self.value(b))?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), g))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = tensor::sigmoid(self.value(x));
        let g = self.needs(x);
        self.push(out, Op::Sigmoid(x), g)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = tensor::tanh(self.value(x));
        let g = self.needs(x);
        self.push(out, Op::Tanh(x), g)
    }

    /// Multiplies every element of `x` by the single value held in `s`.
    pub fn scale(&mut self, s: Var, x: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "scale",
                lhs: sv.shape().to_vec(),
                rhs: vec![1],
            });
        }
        let k = sv.item();
        let out = self.value(x).map(|v| k * v);
        let g = self.needs(s) || self.needs(x);
        Ok(self.push(out, Op::Scale(s, x), g))
    }

    pub fn scale_const(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| k * v);
        let g = self.needs(x);
        self.push(out, Op::ScaleConst(x, k), g)
    }

    pub fn inner(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::inner(self.value(a), self.value(b))?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Inner(a, b), g))
    }

    /// Concatenates rank-1 tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 1 {
                return Err(TensorError::Rank {
                    op: "concat",
                    expected: 1,
                    shape: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let g = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), g))
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Contract("sum of zero tensors".into()))?;
        let mut acc = self.value(first).clone();
        for &p in &parts[1..] {
            acc = tensor::add(&acc, self.value(p))?;
        }
        let g = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(acc, Op::Sum(parts.to_vec()), g))
    }

    /// Picks element `i` of a rank-1 tensor as a `[1]` tensor.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var> {
        let t = self.value(x);
        if i >= t.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "index",
                index: i,
                extent: t.len(),
            });
        }
        let out = Tensor::scalar(t.data()[i]);
        let g = self.needs(x);
        Ok(self.push(out, Op::Index(x, i), g))
    }

    /// Row `row` of a `[V,d]` table as a `[d]` vector.
    pub fn gather(&mut self, table: Var, row: usize) -> Result<Var> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(TensorError::Rank {
                op: "gather",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        }
        if row >= t.shape()[0] {
            return Err(TensorError::IndexOutOfRange {
                op: "gather",
                index: row,
                extent: t.shape()[0],
            });
        }
        let out = Tensor::vector(t.row(row).to_vec());
        let g = self.needs(table);
        Ok(self.push(out, Op::Gather(table, row), g))
    }

    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let out = tensor::softmax(self.value(x), mask)?;
        let g = self.needs(x);
        Ok(self.push(out, Op::Softmax(x), g))
    }

    /// `-log softmax(logits)[target]`, computed with log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let x = self.value(logits);
        if target >= x.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "cross_entropy",
                index: target,
                extent: x.len(),
            });
        }
        let probs = tensor::softmax(x, None)?;
        let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - x.data()[target];
        let g = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy(logits, target, probs.data().to_vec()),
            g,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut row_grads: HashMap<usize, BTreeMap<usize, Vec<f64>>> = HashMap::new();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads, &mut row_grads);
            grads[idx] = Some(g);
        }

        let mut out = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.value.requires_grad() {
                continue;
            }
            let dense = grads[idx].take();
            let rows = row_grads.remove(&idx);
            let entry = match (dense, rows) {
                (Some(mut d), Some(rows)) => {
                    let cols = node.value.cols();
                    for (r, v) in rows {
                        for (a, b) in d[r * cols..(r + 1) * cols].iter_mut().zip(v) {
                            *a += b;
                        }
                    }
                    LeafGrad::Dense(d)
                }
                (Some(d), None) => LeafGrad::Dense(d),
                (None, Some(rows)) => LeafGrad::Rows {
                    cols: node.value.cols(),
                    rows,
                },
                (None, None) => LeafGrad::Dense(vec![0.0; node.value.len()]),
            };
            out.insert(
                Var(idx),
                GradEntry {
                    shape: node.value.shape().to_vec(),
                    grad: entry,
                },
            );
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(
        &self,
        idx: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        row_grads: &mut HashMap<usize, BTreeMap<usize, Vec<f64>>>,
    ) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = if bv.shape().len() == 1 { 1 } else { bv.shape()[1] };
                if self.needs(*a) {
                    let ga = slot(grads, *a, m * k);
                    // dA = G B^T
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        let garow = &mut ga[i * k..(i + 1) * k];
                        if n == 1 {
                            let gi = grow[0];
                            if gi != 0.0 {
                                for (d, &bj) in garow.iter_mut().zip(bv.data()) {
                                    *d += gi * bj;
                                }
                            }
                        } else {
                            for (p, d) in garow.iter_mut().enumerate() {
                                *d += dot(grow, &bv.data()[p * n..(p + 1) * n]);
                            }
                        }
                    }
                }
                if self.needs(*b) {
                    let gb = slot(grads, *b, k * n);
                    // dB = A^T G
                    if n == 1 {
                        for i in 0..m {
                            if g[i] != 0.0 {
                                axpy(gb, g[i], av.row(i));
                            }
                        }
                        return;
                    }
                    for i in 0..m {
                        let arow = av.row(i);
                        let grow = &g[i * n..(i + 1) * n];
                        for (p, &ap) in arow.iter().enumerate() {
                            if ap == 0.0 {
                                continue;
                            }
                            for (d, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += ap * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.needs(*v) {
                        axpy(slot(grads, *v, g.len()), 1.0, g);
                    }
                }
            }
            Op::AddRowBias(m, bias) => {
                if self.needs(*m) {
                    axpy(slot(grads, *m, g.len()), 1.0, g);
                }
                if self.needs(*bias) {
                    let c = self.value(*bias).len();
                    let gb = slot(grads, *bias, c);
                    for (i, &gv) in g.iter().enumerate() {
                        gb[i % c] += gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let bv = self.value(*b).data();
                    let ga = slot(grads, *a, g.len());
                    for ((d, &gv), &bj) in ga.iter_mut().zip(g).zip(bv) {
                        *d += gv * bj;
                    }
                }
                if self.needs(*b) {
                    let av = self.value(*a).data();
                    let gb = slot(grads, *b, g.len());
                    for ((d, &gv), &aj) in gb.iter_mut().zip(g).zip(av) {
                        *d += gv * aj;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = slot(grads, *x, g.len());
                for ((d, &gv), &s) in gx.iter_mut().zip(g).zip(y) {
                    *d += gv * s * (1.0 - s);
                }
            }
            Op::Tanh(x) => {
                let gx = slot(grads, *x, g.len());
                for ((d, &gv), &t) in gx.iter_mut().zip(g).zip(y) {
                    *d += gv * (1.0 - t * t);
                }
            }
            Op::Scale(s, x) => {
                let k = self.value(*s).item();
                if self.needs(*s) {
                    let xv = self.value(*x).data();
                    let gs = dot(g, xv);
                    slot(grads, *s, 1)[0] += gs;
                }
                if self.needs(*x) {
                    axpy(slot(grads, *x, g.len()), k, g);
                }
            }
            Op::ScaleConst(x, k) => {
                axpy(slot(grads, *x, g.len()), *k, g);
            }
            Op::Inner(a, b) => {
                let gs = g[0];
                if self.needs(*a) {
                    let bv = self.value(*b).data();
                    axpy(slot(grads, *a, bv.len()), gs, bv);
                }
                if self.needs(*b) {
                    let av = self.value(*a).data();
                    axpy(slot(grads, *b, av.len()), gs, av);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if self.needs(*p) {
                        axpy(slot(grads, *p, len), 1.0, &g[off..off + len]);
                    }
                    off += len;
                }
            }
            Op::Sum(parts) => {
                for p in parts {
                    if self.needs(*p) {
                        axpy(slot(grads, *p, g.len()), 1.0, g);
                    }
                }
            }
            Op::Index(x, i) => {
                let len = self.value(*x).len();
                slot(grads, *x, len)[*i] += g[0];
            }
            Op::Gather(table, row) => {
                let t = &self.nodes[table.0];
                let cols = t.value.cols();
                if matches!(t.op, Op::Leaf) {
                    let entry = row_grads
                        .entry(table.0)
                        .or_default()
                        .entry(*row)
                        .or_insert_with(|| vec![0.0; cols]);
                    axpy(entry, 1.0, g);
                } else {
                    let len = t.value.len();
                    let gt = slot(grads, *table, len);
                    axpy(&mut gt[row * cols..(row + 1) * cols], 1.0, g);
                }
            }
            Op::Softmax(x) => {
                let s = dot(g, y);
                let gx = slot(grads, *x, g.len());
                for ((d, &gv), &p) in gx.iter_mut().zip(g).zip(y) {
                    *d += p * (gv - s);
                }
            }
            Op::CrossEntropy(logits, target, probs) => {
                let gs = g[0];
                let gx = slot(grads, *logits, probs.len());
                for (i, (d, &p)) in gx.iter_mut().zip(probs).enumerate() {
                    let onehot = if i == *target { 1.0 } else { 0.0 };
                    *d += gs * (p - onehot);
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(dst: &mut [f64], k: f64, src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

/// Gradient of a leaf: dense, or row-sparse for tables only touched by `gather`.
#[derive(Debug, Clone)]
pub enum LeafGrad {
    Dense(Vec<f64>),
    Rows {
        cols: usize,
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
struct GradEntry {
    shape: Vec<usize>,
    grad: LeafGrad,
}

/// Gradients of every differentiable leaf on a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: HashMap<Var, GradEntry>,
}

impl Gradients {
    pub fn contains(&self, v: Var) -> bool {
        self.grads.contains_key(&v)
    }

    /// Dense gradient with the leaf's shape.
    pub fn get(&self, v: Var) -> Option<Tensor> {
        let e = self.grads.get(&v)?;
        let n: usize = e.shape.iter().product();
        let mut data = vec![0.0; n];
        self.accumulate_into(v, &mut data);
        Tensor::new(e.shape.clone(), data).ok()
    }

    pub fn raw(&self, v: Var) -> Option<&LeafGrad> {
        self.grads.get(&v).map(|e| &e.grad)
    }

    /// Adds this leaf's gradient into `dst` (which must have the leaf's size).
    pub fn accumulate_into(&self, v: Var, dst: &mut [f64]) {
        let Some(e) = self.grads.get(&v) else {
            return;
        };
        match &e.grad {
            LeafGrad::Dense(d) => axpy(dst, 1.0, d),
            LeafGrad::Rows { cols, rows } => {
                for (r, vals) in rows {
                    axpy(&mut dst[r * cols..(r + 1) * cols], 1.0, vals);
                }
            }
        }
    }
}
