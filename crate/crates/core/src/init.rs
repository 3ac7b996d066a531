use rand::Rng;

use crate::tensor::Tensor;

/// Glorot-uniform `[rows, cols]` matrix, with `fan_in = cols`, `fan_out = rows`.
pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::matrix(rows, cols, data).expect("shape matches")
}

pub fn glorot_vector<R: Rng>(len: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (len + 1) as f64).sqrt();
    Tensor::vector((0..len).map(|_| rng.gen_range(-limit..limit)).collect())
}

pub fn constant(len: usize, value: f64) -> Tensor {
    Tensor::vector(vec![value; len])
}
