//! Query-aware inference: run the template over the targets, encode the
//! resulting subgraph with training-time identifiers, fetch only the embedding
//! rows it touches and run the RGCN over the subgraph alone.
//!
//! Relations are directed: a triple `(s, p, o)` yields an edge `s → o` with the
//! forward id of `p` and an edge `o → s` with its inverse id, so both
//! endpoints receive messages. Edges of the task predicate are dropped so
//! labels and held-out links never leak into the input graph.

mod compact;
mod encode;
mod extract;

pub use compact::{
    evaluate, instantiate, predict, predict_full, ClassPrediction, CompactModel, LinkPrediction, Metrics, ModeSelect,
    ModelWeights, PredictOptions, Predictions, QueryTrace, StageTiming, DEFAULT_DENSITY_THRESHOLD,
};
pub use encode::{
    labels_from_graph, tails_from_graph, type_key, EncodingMaps, TaskTarget, INVERSE_PREFIX, LITERAL_NODE_TYPE,
};
pub use extract::{
    encode_subgraph, extract_subgraph, node_inputs, prepare_training, query_triples, InferenceSubgraph, NodeRef,
    TrainingSet,
};

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::rgcn::ModelError;
use crate::sparql::QueryError;
use crate::store::StoreError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("template does not fit the graph: {0}")]
    Template(String),
    #[error("relation {0} has no training-time encoding")]
    UnknownRelation(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("store is stale for this encoding: {0}")]
    Stale(StoreError),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no ground truth for targets: {}", .0.join(", "))]
    MissingGroundTruth(Vec<String>),
    #[error("model does not match subgraph: {0}")]
    Mismatch(String),
}

impl From<StoreError> for InferenceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::OutOfRange { .. } => InferenceError::Stale(e),
            e => InferenceError::Store(e),
        }
    }
}
