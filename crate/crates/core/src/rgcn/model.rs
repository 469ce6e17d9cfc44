use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layer::LayerWeights;
use super::ModelError;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    /// Node classification: `F × C` weight and `C` bias.
    Classifier { weight: Matrix<f32>, bias: Vec<f32> },
    /// Link prediction: one DistMult vector per relation.
    DistMult { relations: Matrix<f32> },
}

impl Head {
    pub fn parameter_count(&self) -> usize {
        match self {
            Head::Classifier { weight, bias } => weight.as_slice().len() + bias.len(),
            Head::DistMult { relations } => relations.as_slice().len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyper {
    pub layers: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

/// Layer-0 embeddings of one node type, one row per training-time encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub node_type: String,
    pub matrix: Matrix<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgcnModel {
    pub hyper: Hyper,
    /// Relation names by relation id.
    pub relations: Vec<String>,
    pub layers: Vec<LayerWeights<f32>>,
    pub embeddings: Vec<EmbeddingTable>,
    pub head: Head,
}

impl RgcnModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dim = |m: String| Err(ModelError::DimMismatch(m));
        if self.layers.is_empty() {
            return Err(ModelError::Invalid("model has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.check()?;
            if layer.relations.len() != self.relations.len() {
                return dim(alloc::format!(
                    "layer {l} has {} relation weights for {} relations",
                    layer.relations.len(),
                    self.relations.len()
                ));
            }
            if l > 0 && self.layers[l - 1].dim_out() != layer.dim_in() {
                return dim(alloc::format!("layer {l} input width does not chain"));
            }
        }
        let input = self.input_dim();
        let mut seen = BTreeSet::new();
        for t in &self.embeddings {
            if !seen.insert(t.node_type.as_str()) {
                return Err(ModelError::Invalid(alloc::format!("duplicate embedding type {}", t.node_type)));
            }
            if t.matrix.cols() != input {
                return dim(alloc::format!("embeddings of {} have width {}, expected {input}", t.node_type, t.matrix.cols()));
            }
        }
        let out = self.output_dim();
        match &self.head {
            Head::Classifier { weight, bias } if weight.rows() != out || bias.len() != weight.cols() => {
                dim(alloc::format!("classifier {:?} with bias {} on width {out}", weight.shape(), bias.len()))
            }
            Head::DistMult { relations } if relations.cols() != out || relations.rows() != self.relations.len() => {
                dim(alloc::format!("decoder {:?} for {} relations of width {out}", relations.shape(), self.relations.len()))
            }
            _ => Ok(()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, LayerWeights::dim_in)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, LayerWeights::dim_out)
    }

    pub fn table(&self, node_type: &str) -> Option<&EmbeddingTable> {
        self.embeddings.iter().find(|t| t.node_type == node_type)
    }

    pub fn table_index(&self, node_type: &str) -> Option<usize> {
        self.embeddings.iter().position(|t| t.node_type == node_type)
    }

    /// Bytes of all embedding tables as stored (f32).
    pub fn embedding_bytes(&self) -> u64 {
        self.embeddings.iter().map(|t| t.matrix.as_slice().len() as u64 * 4).sum()
    }

    /// Bytes of layer weights and head as stored (f32).
    pub fn parameter_bytes(&self) -> u64 {
        let layers: usize = self
            .layers
            .iter()
            .map(|l| l.self_loop.as_slice().len() * (l.relations.len() + 1))
            .sum();
        (layers + self.head.parameter_count()) as u64 * 4
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.head {
            Head::Classifier { bias, .. } => Some(bias.len()),
            Head::DistMult { .. } => None,
        }
    }
}
