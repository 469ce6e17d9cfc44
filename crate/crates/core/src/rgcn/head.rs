use alloc::vec::Vec;

use super::graph::Edge;
use super::ModelError;
use crate::tensor::{axpy_vec_mat, Matrix};

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// One row of class scores per output row.
    pub scores: Matrix<f64>,
    pub labels: Vec<usize>,
}

/// `scores = outputs · weight + bias`, labels by [`argmax`].
pub fn classify<W: Copy + Default + Into<f64>>(
    outputs: &Matrix<f64>,
    weight: &Matrix<W>,
    bias: &[W],
) -> Result<Classification, ModelError> {
    if outputs.cols() != weight.rows() || bias.len() != weight.cols() {
        return Err(ModelError::DimMismatch(alloc::format!(
            "outputs {:?}, head {:?}, bias {}",
            outputs.shape(),
            weight.shape(),
            bias.len()
        )));
    }
    let c = weight.cols();
    let mut scores = Matrix::zeros(outputs.rows(), c);
    let mut labels = Vec::with_capacity(outputs.rows());
    for i in 0..outputs.rows() {
        let row = scores.row_mut(i);
        for (s, &b) in row.iter_mut().zip(bias) {
            *s = b.into();
        }
        axpy_vec_mat(outputs.row(i), weight.as_slice(), c, 1.0, row);
        labels.push(argmax(row));
    }
    Ok(Classification { scores, labels })
}

/// DistMult: `s(h, r, t) = Σ_d h_d · r_d · t_d`, with `relations` one row per relation.
pub fn score_links<W: Copy + Default + Into<f64>>(
    outputs: &Matrix<f64>,
    relations: &Matrix<W>,
    triples: &[Edge],
) -> Result<Vec<f64>, ModelError> {
    if relations.cols() != outputs.cols() {
        return Err(ModelError::DimMismatch(alloc::format!(
            "outputs have width {}, relation vectors {}",
            outputs.cols(),
            relations.cols()
        )));
    }
    triples
        .iter()
        .map(|e| {
            if e.src >= outputs.rows() || e.dst >= outputs.rows() || e.rel >= relations.rows() {
                return Err(ModelError::OutOfRange(alloc::format!("candidate ({}, {}, {})", e.src, e.rel, e.dst)));
            }
            let (h, r, t) = (outputs.row(e.src), relations.row(e.rel), outputs.row(e.dst));
            Ok(h.iter().zip(r).zip(t).map(|((&h, &r), &t)| h * r.into() * t).sum())
        })
        .collect()
}

/// Zero-based rank of candidate `p`: candidates scoring higher, plus equal-scoring
/// candidates with a lower index.
pub fn rank_of(scores: &[f64], p: usize) -> usize {
    let sp = scores[p];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > sp || (s == sp && j < p))
        .count()
}

/// Fraction of `positives` (indices into `scores`) ranked within the top `k`.
pub fn rank_hits_at_k(scores: &[f64], positives: &[usize], k: usize) -> Result<f64, ModelError> {
    if k == 0 {
        return Err(ModelError::InvalidK);
    }
    if positives.is_empty() {
        return Err(ModelError::Invalid("no positives to rank".into()));
    }
    let mut hits = 0usize;
    for &p in positives {
        if p >= scores.len() {
            return Err(ModelError::OutOfRange(alloc::format!("positive {p} of {} candidates", scores.len())));
        }
        if rank_of(scores, p) < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / positives.len() as f64)
}
