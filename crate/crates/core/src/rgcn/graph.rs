use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// A directed, typed edge. Messages flow from `src` to `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub rel: usize,
    pub dst: usize,
}

impl Edge {
    pub fn new(src: usize, rel: usize, dst: usize) -> Self {
        Edge { src, rel, dst }
    }
}

/// Integer-encoded graph consumed by the layers.
///
/// Edges are deduplicated and kept sorted by `(dst, rel, src)`, which fixes the
/// summation order. `norm[k]` is `1 / c(dst, rel)` for edge `k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodedGraph {
    num_nodes: usize,
    relation_count: usize,
    edges: Vec<Edge>,
    norm: Vec<f64>,
    node_type: Vec<usize>,
}

impl EncodedGraph {
    pub fn new(
        num_nodes: usize,
        relation_count: usize,
        edges: impl IntoIterator<Item = Edge>,
        node_type: Vec<usize>,
    ) -> Result<Self, ModelError> {
        if node_type.len() != num_nodes {
            return Err(ModelError::DimMismatch(alloc::format!(
                "{} node types for {num_nodes} nodes",
                node_type.len()
            )));
        }
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        for e in &edges {
            if e.src >= num_nodes || e.dst >= num_nodes || e.rel >= relation_count {
                return Err(ModelError::OutOfRange(alloc::format!(
                    "edge ({}, {}, {}) with {num_nodes} nodes and {relation_count} relations",
                    e.src,
                    e.rel,
                    e.dst
                )));
            }
        }
        edges.sort_by_key(|e| (e.dst, e.rel, e.src));
        edges.dedup();
        let mut norm = alloc::vec![0.0; edges.len()];
        let mut start = 0;
        while start < edges.len() {
            let key = (edges[start].dst, edges[start].rel);
            let end = start + edges[start..].iter().take_while(|e| (e.dst, e.rel) == key).count();
            let c = 1.0 / (end - start) as f64;
            norm[start..end].iter_mut().for_each(|x| *x = c);
            start = end;
        }
        Ok(EncodedGraph { num_nodes, relation_count, edges, norm, node_type })
    }

    /// Graph whose nodes all share type 0.
    pub fn untyped(num_nodes: usize, relation_count: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self, ModelError> {
        Self::new(num_nodes, relation_count, edges, alloc::vec![0; num_nodes])
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_norm(&self) -> &[f64] {
        &self.norm
    }

    pub fn node_type_of(&self, node: usize) -> usize {
        self.node_type[node]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_type
    }

    /// `|E| / |N|²`, zero for an empty graph.
    pub fn density(&self) -> f64 {
        if self.num_nodes == 0 {
            0.0
        } else {
            self.edges.len() as f64 / (self.num_nodes as f64 * self.num_nodes as f64)
        }
    }

    /// Relations with at least one edge, ascending.
    pub fn active_relations(&self) -> Vec<usize> {
        let mut seen = alloc::vec![false; self.relation_count];
        for e in &self.edges {
            seen[e.rel] = true;
        }
        (0..self.relation_count).filter(|&r| seen[r]).collect()
    }
}
