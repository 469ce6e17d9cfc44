use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::hash::fnv1a64;
use crate::tensor::Matrix;

/// Glorot/Xavier uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

pub fn xavier_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<f64> {
    let b = xavier_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.gen_range(-b..b)).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches by construction")
}

/// Node vectors are initialised as `1 × dim` Xavier rows, whether stored or seeded.
pub fn embedding_rows<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Matrix<f64> {
    let b = xavier_bound(1, dim);
    let data = (0..rows * dim).map(|_| rng.gen_range(-b..b)).collect();
    Matrix::from_vec(rows, dim, data).expect("length matches by construction")
}

/// Seed for a node's on-the-fly vector, derived from the model seed and the node's IRI.
pub fn node_seed(model_seed: u64, key: &str) -> u64 {
    fnv1a64(key.as_bytes()) ^ model_seed.rotate_left(32)
}

/// Deterministic Xavier vector for a node without a stored embedding.
pub fn seeded_vector(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    embedding_rows(1, dim, &mut rng).into_vec()
}

/// Where a node's layer-0 vector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeInput {
    /// Row `row` of embedding table `table`.
    Row { table: usize, row: usize },
    /// [`seeded_vector`] with this seed.
    Seeded(u64),
    /// Zero vector (literal leaves).
    Zero,
}

/// Builds `H⁽⁰⁾` from per-node input descriptors.
pub fn assemble_inputs<W: Copy + Default + Into<f64>>(
    inputs: &[NodeInput],
    tables: &[Matrix<W>],
    dim: usize,
) -> Result<Matrix<f64>, ModelError> {
    let mut h = Matrix::zeros(inputs.len(), dim);
    for (i, input) in inputs.iter().enumerate() {
        match *input {
            NodeInput::Row { table, row } => {
                let t = tables
                    .get(table)
                    .ok_or_else(|| ModelError::OutOfRange(alloc::format!("embedding table {table}")))?;
                if row >= t.rows() {
                    return Err(ModelError::OutOfRange(alloc::format!(
                        "row {row} of table {table} with {} rows",
                        t.rows()
                    )));
                }
                if t.cols() != dim {
                    return Err(ModelError::DimMismatch(alloc::format!("table {table} has width {}, expected {dim}", t.cols())));
                }
                for (o, &x) in h.row_mut(i).iter_mut().zip(t.row(row)) {
                    *o = x.into();
                }
            }
            NodeInput::Seeded(seed) => h.row_mut(i).copy_from_slice(&seeded_vector(seed, dim)),
            NodeInput::Zero => {}
        }
    }
    Ok(h)
}
