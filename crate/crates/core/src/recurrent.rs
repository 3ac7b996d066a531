//! LSTM cell, bidirectional wrapper and the part-wise / sentence-wide hierarchy.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::init;
use crate::tensor::{Result, Tensor, TensorError};

/// Gate weights act on the concatenation `[h_{t-1}, x_t]`, so each `W` is
/// `[h, h + d]`. The output gate is absent in the literal variant where
/// `h_t = tanh(C_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<T = Tensor> {
    pub w_f: T,
    pub w_i: T,
    pub w_g: T,
    pub w_o: Option<T>,
    pub b_f: T,
    pub b_i: T,
    pub b_g: T,
    pub b_o: Option<T>,
}

impl<T> LstmCell<T> {
    pub fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> LstmCell<U> {
        LstmCell {
            w_f: f(&format!("{prefix}.w_f"), &self.w_f),
            w_i: f(&format!("{prefix}.w_i"), &self.w_i),
            w_g: f(&format!("{prefix}.w_g"), &self.w_g),
            w_o: self.w_o.as_ref().map(|w| f(&format!("{prefix}.w_o"), w)),
            b_f: f(&format!("{prefix}.b_f"), &self.b_f),
            b_i: f(&format!("{prefix}.b_i"), &self.b_i),
            b_g: f(&format!("{prefix}.b_g"), &self.b_g),
            b_o: self.b_o.as_ref().map(|b| f(&format!("{prefix}.b_o"), b)),
        }
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{prefix}.w_f"), &mut self.w_f);
        f(&format!("{prefix}.w_i"), &mut self.w_i);
        f(&format!("{prefix}.w_g"), &mut self.w_g);
        if let Some(w) = self.w_o.as_mut() {
            f(&format!("{prefix}.w_o"), w);
        }
        f(&format!("{prefix}.b_f"), &mut self.b_f);
        f(&format!("{prefix}.b_i"), &mut self.b_i);
        f(&format!("{prefix}.b_g"), &mut self.b_g);
        if let Some(b) = self.b_o.as_mut() {
            f(&format!("{prefix}.b_o"), b);
        }
    }
}

impl LstmCell {
    /// Glorot-uniform weights, zero biases except a forget bias of 1.
    pub fn init<R: Rng>(hidden: usize, input: usize, output_gate: bool, rng: &mut R) -> Self {
        let cols = hidden + input;
        let w_f = init::glorot(hidden, cols, rng);
        let w_i = init::glorot(hidden, cols, rng);
        let w_g = init::glorot(hidden, cols, rng);
        let w_o = output_gate.then(|| init::glorot(hidden, cols, rng));
        Self {
            w_f,
            w_i,
            w_g,
            w_o,
            b_f: init::constant(hidden, 1.0),
            b_i: Tensor::zeros(&[hidden]),
            b_g: Tensor::zeros(&[hidden]),
            b_o: output_gate.then(|| Tensor::zeros(&[hidden])),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_f.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.cols() - self.hidden()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape, hidden: usize) -> Self {
        Self {
            h: tape.constant(Tensor::zeros(&[hidden])),
            c: tape.constant(Tensor::zeros(&[hidden])),
        }
    }
}

fn gate(tape: &mut Tape, w: Var, b: Var, z: Var) -> Result<Var> {
    let p = tape.matmul(w, z)?;
    tape.add(p, b)
}

/// One time step:
/// `f, i, o = σ(W·[h, x] + b)`, `g = tanh(W_g·[h, x] + b_g)`,
/// `C' = f ⊗ C ⊕ i ⊗ g`, `h' = o ⊗ tanh(C')`.
pub fn lstm_step(tape: &mut Tape, cell: &LstmCell<Var>, state: LstmState, x: Var) -> Result<LstmState> {
    let z = tape.concat(&[state.h, x])?;
    let f = gate(tape, cell.w_f, cell.b_f, z)?;
    let f = tape.sigmoid(f);
    let i = gate(tape, cell.w_i, cell.b_i, z)?;
    let i = tape.sigmoid(i);
    let g = gate(tape, cell.w_g, cell.b_g, z)?;
    let g = tape.tanh(g);
    let keep = tape.mul(f, state.c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c);
    let h = match (cell.w_o, cell.b_o) {
        (Some(w_o), Some(b_o)) => {
            let o = gate(tape, w_o, b_o, z)?;
            let o = tape.sigmoid(o);
            tape.mul(o, squashed)?
        }
        _ => squashed,
    };
    Ok(LstmState { h, c })
}

/// Hidden outputs of a left-to-right pass from a zero state.
pub fn lstm_unroll(tape: &mut Tape, cell: &LstmCell<Var>, xs: &[Var]) -> Result<Vec<Var>> {
    let hidden = tape.value(cell.b_f).len();
    let mut state = LstmState::zeros(tape, hidden);
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        state = lstm_step(tape, cell, state, x)?;
        out.push(state.h);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blstm<T = Tensor> {
    pub fwd: LstmCell<T>,
    pub bwd: LstmCell<T>,
}

impl<T> Blstm<T> {
    pub fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> Blstm<U> {
        Blstm {
            fwd: self.fwd.map(&format!("{prefix}.fwd"), f),
            bwd: self.bwd.map(&format!("{prefix}.bwd"), f),
        }
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        self.fwd.for_each_mut(&format!("{prefix}.fwd"), f);
        self.bwd.for_each_mut(&format!("{prefix}.bwd"), f);
    }
}

impl Blstm {
    pub fn init<R: Rng>(hidden: usize, input: usize, output_gate: bool, rng: &mut R) -> Self {
        Self {
            fwd: LstmCell::init(hidden, input, output_gate, rng),
            bwd: LstmCell::init(hidden, input, output_gate, rng),
        }
    }
}

/// Rows `[h_fwd_t ; h_bwd_t]`. The backward cell reads the reversed sequence and
/// its outputs are re-reversed so both halves of a row refer to step `t`.
pub fn blstm_forward(tape: &mut Tape, blstm: &Blstm<Var>, xs: &[Var]) -> Result<Vec<Var>> {
    if xs.is_empty() {
        return Err(TensorError::Contract("BLSTM over an empty sequence".into()));
    }
    let fwd = lstm_unroll(tape, &blstm.fwd, xs)?;
    let reversed: Vec<Var> = xs.iter().rev().copied().collect();
    let mut bwd = lstm_unroll(tape, &blstm.bwd, &reversed)?;
    bwd.reverse();
    fwd.iter()
        .zip(&bwd)
        .map(|(&f, &b)| tape.concat(&[f, b]))
        .collect()
}

/// Lower BLSTMs (one shared or three independent) and the upper BLSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy<T = Tensor> {
    /// Either one set shared by all parts, or before / between / after.
    pub lower: Vec<Blstm<T>>,
    pub upper: Blstm<T>,
}

const PART_NAMES: [&str; 3] = ["before", "between", "after"];

impl<T> Hierarchy<T> {
    fn lower_name(&self, k: usize) -> String {
        if self.lower.len() == 1 {
            "lower.shared".to_string()
        } else {
            format!("lower.{}", PART_NAMES[k])
        }
    }

    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&str, &'a T) -> U) -> Hierarchy<U> {
        Hierarchy {
            lower: self
                .lower
                .iter()
                .enumerate()
                .map(|(k, b)| b.map(&self.lower_name(k), f))
                .collect(),
            upper: self.upper.map("upper", f),
        }
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
        let names: Vec<String> = (0..self.lower.len()).map(|k| self.lower_name(k)).collect();
        for (b, name) in self.lower.iter_mut().zip(names) {
            b.for_each_mut(&name, f);
        }
        self.upper.for_each_mut("upper", f);
    }

    pub fn lower_for(&self, part: usize) -> &Blstm<T> {
        &self.lower[part.min(self.lower.len() - 1)]
    }
}

impl Hierarchy {
    pub fn init<R: Rng>(
        input: usize,
        lower_hidden: usize,
        upper_hidden: usize,
        shared_lower: bool,
        output_gate: bool,
        rng: &mut R,
    ) -> Self {
        let n = if shared_lower { 1 } else { 3 };
        Self {
            lower: (0..n)
                .map(|_| Blstm::init(lower_hidden, input, output_gate, rng))
                .collect(),
            upper: Blstm::init(upper_hidden, 2 * lower_hidden, output_gate, rng),
        }
    }
}

/// Output of the hierarchy with the lower-layer sequences kept for inspection.
#[derive(Debug, Clone)]
pub struct HierarchyOutput {
    pub lower: [Vec<Var>; 3],
    pub upper: Vec<Var>,
}

/// Runs each part through its lower BLSTM, concatenates the three output
/// sequences along time and runs the upper BLSTM over the result.
pub fn hierarchical_forward(
    tape: &mut Tape,
    hier: &Hierarchy<Var>,
    parts: [&[Var]; 3],
) -> Result<HierarchyOutput> {
    let mut lower: [Vec<Var>; 3] = Default::default();
    for (k, xs) in parts.iter().enumerate() {
        lower[k] = blstm_forward(tape, hier.lower_for(k), xs)?;
    }
    let joined: Vec<Var> = lower.iter().flatten().copied().collect();
    let upper = blstm_forward(tape, &hier.upper, &joined)?;
    Ok(HierarchyOutput { lower, upper })
}

/// Stacks row variables into a `[T, width]` matrix.
pub fn stack_rows(tape: &Tape, rows: &[Var]) -> Tensor {
    let rows: Vec<Vec<f64>> = rows.iter().map(|&r| tape.value(r).data().to_vec()).collect();
    Tensor::from_rows(&rows).expect("rows share a width")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::tensor::sigmoid_scalar;
    use rand::Rng;

    fn bind(tape: &mut Tape, cell: &LstmCell) -> LstmCell<Var> {
        cell.map("c", &mut |_, t| tape.constant(t.clone()))
    }

    fn zero_cell(h: usize, d: usize) -> LstmCell {
        LstmCell {
            w_f: Tensor::zeros(&[h, h + d]),
            w_i: Tensor::zeros(&[h, h + d]),
            w_g: Tensor::zeros(&[h, h + d]),
            w_o: Some(Tensor::zeros(&[h, h + d])),
            b_f: Tensor::zeros(&[h]),
            b_i: Tensor::zeros(&[h]),
            b_g: Tensor::zeros(&[h]),
            b_o: Some(Tensor::zeros(&[h])),
        }
    }

    fn random_seq(rng: &mut impl Rng, t: usize, d: usize) -> Vec<Tensor> {
        (0..t)
            .map(|_| Tensor::vector((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn zero_cell_gives_zero_state() {
        let mut tape = Tape::new();
        let c = bind(&mut tape, &zero_cell(3, 2));
        let s0 = LstmState::zeros(&mut tape, 3);
        let x = tape.constant(Tensor::vector(vec![0.7, -0.4]));
        let s1 = lstm_step(&mut tape, &c, s0, x).unwrap();
        assert!(tape.value(s1.c).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(s1.h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_carries_cell() {
        let mut cell = zero_cell(1, 1);
        cell.b_f = Tensor::vector(vec![50.0]);
        let mut tape = Tape::new();
        let c = bind(&mut tape, &cell);
        let s0 = LstmState {
            h: tape.constant(Tensor::vector(vec![0.0])),
            c: tape.constant(Tensor::vector(vec![0.8])),
        };
        let x = tape.constant(Tensor::vector(vec![0.3]));
        let s1 = lstm_step(&mut tape, &c, s0, x).unwrap();
        assert!((tape.value(s1.c).item() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn scalar_cell_matches_plain_arithmetic() {
        let mut rng = substream(11, "t");
        let mut r = || rng.gen_range(-2.0..2.0);
        let (wf, wi, wg, wo) = ([r(), r()], [r(), r()], [r(), r()], [r(), r()]);
        let (bf, bi, bg, bo) = (r(), r(), r(), r());
        let (h0, c0, x) = (r(), r(), r());
        let cell = LstmCell {
            w_f: Tensor::matrix(1, 2, wf.to_vec()).unwrap(),
            w_i: Tensor::matrix(1, 2, wi.to_vec()).unwrap(),
            w_g: Tensor::matrix(1, 2, wg.to_vec()).unwrap(),
            w_o: Some(Tensor::matrix(1, 2, wo.to_vec()).unwrap()),
            b_f: Tensor::vector(vec![bf]),
            b_i: Tensor::vector(vec![bi]),
            b_g: Tensor::vector(vec![bg]),
            b_o: Some(Tensor::vector(vec![bo])),
        };
        let mut tape = Tape::new();
        let c = bind(&mut tape, &cell);
        let s0 = LstmState {
            h: tape.constant(Tensor::vector(vec![h0])),
            c: tape.constant(Tensor::vector(vec![c0])),
        };
        let xv = tape.constant(Tensor::vector(vec![x]));
        let s1 = lstm_step(&mut tape, &c, s0, xv).unwrap();

        let f = sigmoid_scalar(wf[0] * h0 + wf[1] * x + bf);
        let i = sigmoid_scalar(wi[0] * h0 + wi[1] * x + bi);
        let g = (wg[0] * h0 + wg[1] * x + bg).tanh();
        let o = sigmoid_scalar(wo[0] * h0 + wo[1] * x + bo);
        let c1 = f * c0 + i * g;
        let h1 = o * c1.tanh();
        assert!((tape.value(s1.c).item() - c1).abs() < 1e-12);
        assert!((tape.value(s1.h).item() - h1).abs() < 1e-12);
    }

    #[test]
    fn literal_variant_uses_tanh_of_cell() {
        let mut rng = substream(12, "t");
        let cell = LstmCell::init(2, 3, false, &mut rng);
        assert!(cell.w_o.is_none());
        let mut tape = Tape::new();
        let c = bind(&mut tape, &cell);
        let s0 = LstmState::zeros(&mut tape, 2);
        let x = tape.constant(random_seq(&mut rng, 1, 3).remove(0));
        let s1 = lstm_step(&mut tape, &c, s0, x).unwrap();
        let want = tape.value(s1.c).map(f64::tanh);
        assert!(tape.value(s1.h).bitwise_eq(&want));
    }

    #[test]
    fn backward_direction_equals_forward_on_reversed_input() {
        let mut rng = substream(13, "t");
        let b = Blstm::init(3, 2, true, &mut rng);
        let xs = random_seq(&mut rng, 4, 2);
        let mut tape = Tape::new();
        let bv = b.map("b", &mut |_, t| tape.constant(t.clone()));
        let x: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let rows = blstm_forward(&mut tape, &bv, &x).unwrap();

        let mut tape2 = Tape::new();
        let cell = bind(&mut tape2, &b.bwd);
        let xr: Vec<Var> = xs.iter().rev().map(|t| tape2.constant(t.clone())).collect();
        let mut oracle = lstm_unroll(&mut tape2, &cell, &xr).unwrap();
        oracle.reverse();
        for (t, &row) in rows.iter().enumerate() {
            let got = &tape.value(row).data()[3..];
            let want = tape2.value(oracle[t]).data();
            assert!(got.iter().zip(want).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn palindrome_with_tied_cells_mirrors() {
        let mut rng = substream(14, "t");
        let cell = LstmCell::init(2, 2, true, &mut rng);
        let b = Blstm {
            fwd: cell.clone(),
            bwd: cell,
        };
        let mut half = random_seq(&mut rng, 2, 2);
        let mut seq = half.clone();
        half.reverse();
        seq.extend(half);
        let mut tape = Tape::new();
        let bv = b.map("b", &mut |_, t| tape.constant(t.clone()));
        let x: Vec<Var> = seq.iter().map(|t| tape.constant(t.clone())).collect();
        let rows = blstm_forward(&mut tape, &bv, &x).unwrap();
        let n = rows.len();
        for t in 0..n {
            let fwd = &tape.value(rows[t]).data()[..2];
            let bwd = &tape.value(rows[n - 1 - t]).data()[2..];
            assert_eq!(fwd, bwd);
        }
    }

    #[test]
    fn single_step_blstm_is_two_cells() {
        let mut rng = substream(15, "t");
        let b = Blstm::init(2, 3, true, &mut rng);
        let x = random_seq(&mut rng, 1, 3).remove(0);
        let mut tape = Tape::new();
        let bv = b.map("b", &mut |_, t| tape.constant(t.clone()));
        let xv = tape.constant(x);
        let row = blstm_forward(&mut tape, &bv, &[xv]).unwrap()[0];
        let s0 = LstmState::zeros(&mut tape, 2);
        let f = lstm_step(&mut tape, &bv.fwd, s0, xv).unwrap();
        let s0 = LstmState::zeros(&mut tape, 2);
        let g = lstm_step(&mut tape, &bv.bwd, s0, xv).unwrap();
        let mut want = tape.value(f.h).data().to_vec();
        want.extend_from_slice(tape.value(g.h).data());
        assert_eq!(tape.value(row).data(), want.as_slice());
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let mut rng = substream(16, "t");
        let b = Blstm::init(2, 3, true, &mut rng);
        let mut tape = Tape::new();
        let bv = b.map("b", &mut |_, t| tape.constant(t.clone()));
        assert!(blstm_forward(&mut tape, &bv, &[]).is_err());
    }

    #[test]
    fn hierarchy_shape_and_locality() {
        let mut rng = substream(17, "t");
        let h = Hierarchy::init(4, 5, 6, false, true, &mut rng);
        let parts: Vec<Vec<Tensor>> = [3, 4, 2].iter().map(|&n| random_seq(&mut rng, n, 4)).collect();
        let run = |parts: &[Vec<Tensor>]| {
            let mut tape = Tape::new();
            let hv = h.map(&mut |_, t| tape.constant(t.clone()));
            let xs: Vec<Vec<Var>> = parts
                .iter()
                .map(|p| p.iter().map(|t| tape.constant(t.clone())).collect())
                .collect();
            let out = hierarchical_forward(&mut tape, &hv, [&xs[0], &xs[1], &xs[2]]).unwrap();
            let lower: Vec<Tensor> = out.lower.iter().map(|l| stack_rows(&tape, l)).collect();
            (lower, stack_rows(&tape, &out.upper))
        };
        let (lower, h2) = run(&parts);
        assert_eq!(h2.shape(), &[9, 12]);
        let mut perturbed = parts.clone();
        perturbed[2][1] = Tensor::vector(vec![5.0, -5.0, 5.0, -5.0]);
        let (lower2, h2b) = run(&perturbed);
        assert!(lower[0].bitwise_eq(&lower2[0]));
        assert!(lower[1].bitwise_eq(&lower2[1]));
        assert!(!lower[2].bitwise_eq(&lower2[2]));
        assert!(!h2.bitwise_eq(&h2b));
    }

    #[test]
    fn zero_lower_weights_feed_zero_inputs_upward() {
        let mut rng = substream(18, "t");
        let mut h = Hierarchy::init(4, 3, 2, false, true, &mut rng);
        for b in &mut h.lower {
            b.for_each_mut("x", &mut |_, t| *t = Tensor::zeros(t.shape()));
        }
        let parts: Vec<Vec<Tensor>> = [1, 3, 2].iter().map(|&n| random_seq(&mut rng, n, 4)).collect();
        let mut tape = Tape::new();
        let hv = h.map(&mut |_, t| tape.constant(t.clone()));
        let xs: Vec<Vec<Var>> = parts
            .iter()
            .map(|p| p.iter().map(|t| tape.constant(t.clone())).collect())
            .collect();
        let out = hierarchical_forward(&mut tape, &hv, [&xs[0], &xs[1], &xs[2]]).unwrap();
        let h2 = stack_rows(&tape, &out.upper);

        let mut tape2 = Tape::new();
        let up = h.upper.map("u", &mut |_, t| tape2.constant(t.clone()));
        let zeros: Vec<Var> = (0..6).map(|_| tape2.constant(Tensor::zeros(&[6]))).collect();
        let rows = blstm_forward(&mut tape2, &up, &zeros).unwrap();
        let direct = stack_rows(&tape2, &rows);
        assert!(h2.bitwise_eq(&direct));
    }
}
