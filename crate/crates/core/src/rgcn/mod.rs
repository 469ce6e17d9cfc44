//! Relational graph convolution.
//!
//! A layer computes, for every node `i`,
//! `h'_i = σ( Σ_r Σ_{j ∈ N_i^r} (1 / |N_i^r|) · W_r h_j + W_0 h_i )`
//! with ReLU between layers and identity after the last. Activations are
//! accumulated in `f64`; stored weights may be `f32` or `f64`.

mod graph;
mod head;
mod init;
mod layer;
mod model;
mod train;

pub use graph::{Edge, EncodedGraph};
pub use head::{argmax, classify, rank_hits_at_k, rank_of, score_links, Classification};
pub use init::{assemble_inputs, embedding_rows, node_seed, seeded_vector, xavier_bound, xavier_matrix, NodeInput};
pub use layer::{forward, rgcn_layer_forward, rgcn_layer_forward_dense, Activation, ForwardMode, LayerWeights, OpCounter};
pub use model::{EmbeddingTable, Head, Hyper, RgcnModel};
pub use train::{loss_and_gradient, sample_negatives, train, HeadParams, Parameters, TrainHyper, TrainProblem, TrainReport, TrainTask};

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("{0}")]
    Invalid(String),
}
