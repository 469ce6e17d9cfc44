//! Row-wise chunking of per-type embedding tables.
//!
//! Row `i` of a type lives in chunk `i / chunk_rows` at offset `i % chunk_rows`.
//! [`EmbeddingSource`] abstracts where chunks come from; the `kgq` crate
//! provides the on-disk implementation, [`InMemoryStore`] is used in tests and
//! as the full-load reference.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rgcn::RgcnModel;
use crate::tensor::Matrix;

pub const DEFAULT_CHUNK_ROWS: usize = 1024;
pub const DTYPE_F32_LE: &str = "f32-le";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("chunk_rows must be at least 1")]
    ZeroChunkRows,
    #[error("row {id} out of range for type {node_type} with {num_rows} rows")]
    OutOfRange { node_type: String, id: usize, num_rows: usize },
    #[error("no embeddings stored for type {0}")]
    UnknownType(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub node_type: String,
    pub num_rows: usize,
    pub dim: usize,
    pub chunk_rows: usize,
    pub dtype: String,
    pub chunk_count: usize,
}

impl EmbeddingManifest {
    pub fn new(node_type: impl Into<String>, num_rows: usize, dim: usize, chunk_rows: usize) -> Result<Self, StoreError> {
        if chunk_rows == 0 {
            return Err(StoreError::ZeroChunkRows);
        }
        Ok(EmbeddingManifest {
            node_type: node_type.into(),
            num_rows,
            dim,
            chunk_rows,
            dtype: DTYPE_F32_LE.to_string(),
            chunk_count: num_rows.div_ceil(chunk_rows),
        })
    }

    /// `(chunk, offset)` of row `i`.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        (i / self.chunk_rows, i % self.chunk_rows)
    }

    pub fn chunk_range(&self, k: usize) -> core::ops::Range<usize> {
        let start = k * self.chunk_rows;
        start..(start + self.chunk_rows).min(self.num_rows)
    }

    pub fn chunk_bytes(&self, k: usize) -> u64 {
        (self.chunk_range(k).len() * self.dim * 4) as u64
    }

    pub fn total_bytes(&self) -> u64 {
        (self.num_rows * self.dim * 4) as u64
    }

    /// Checks chunk count and dtype against the row count.
    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |m: String| Err(StoreError::Corrupt(alloc::format!("manifest of {}: {m}", self.node_type)));
        if self.chunk_rows == 0 {
            return Err(StoreError::ZeroChunkRows);
        }
        if self.dtype != DTYPE_F32_LE {
            return bad(alloc::format!("unsupported dtype {}", self.dtype));
        }
        if self.chunk_count != self.num_rows.div_ceil(self.chunk_rows) {
            return bad(alloc::format!("chunk_count {} does not cover {} rows", self.chunk_count, self.num_rows));
        }
        Ok(())
    }

    pub fn check_id(&self, id: usize) -> Result<(), StoreError> {
        if id >= self.num_rows {
            return Err(StoreError::OutOfRange { node_type: self.node_type.clone(), id, num_rows: self.num_rows });
        }
        Ok(())
    }
}

/// The minimal chunk cover of `ids`.
pub fn covering_chunks<'a>(ids: impl IntoIterator<Item = &'a usize>, chunk_rows: usize) -> BTreeSet<usize> {
    ids.into_iter().map(|i| i / chunk_rows).collect()
}

/// Result of a partial fetch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fetched {
    pub rows: BTreeMap<usize, Vec<f32>>,
    pub chunks_loaded: BTreeSet<usize>,
    pub bytes_loaded: u64,
}

/// Read access to chunked embeddings. Implementations must load exactly the
/// chunks covering the requested ids.
pub trait EmbeddingSource {
    fn manifest(&self, node_type: &str) -> Option<&EmbeddingManifest>;

    fn node_types(&self) -> Vec<String>;

    fn fetch_embeddings(&self, node_type: &str, ids: &BTreeSet<usize>) -> Result<Fetched, StoreError>;
}

/// Chunked view over in-memory tables. Fetches copy whole chunks to mirror
/// the on-disk cost model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InMemoryStore {
    manifests: BTreeMap<String, EmbeddingManifest>,
    tables: BTreeMap<String, Matrix<f32>>,
}

impl InMemoryStore {
    pub fn new(tables: impl IntoIterator<Item = (String, Matrix<f32>)>, chunk_rows: usize) -> Result<Self, StoreError> {
        let mut store = InMemoryStore::default();
        for (ty, m) in tables {
            store.manifests.insert(ty.clone(), EmbeddingManifest::new(ty.clone(), m.rows(), m.cols(), chunk_rows)?);
            store.tables.insert(ty, m);
        }
        Ok(store)
    }

    pub fn from_model(model: &RgcnModel, chunk_rows: usize) -> Result<Self, StoreError> {
        Self::new(model.embeddings.iter().map(|t| (t.node_type.clone(), t.matrix.clone())), chunk_rows)
    }
}

impl EmbeddingSource for InMemoryStore {
    fn manifest(&self, node_type: &str) -> Option<&EmbeddingManifest> {
        self.manifests.get(node_type)
    }

    fn node_types(&self) -> Vec<String> {
        self.manifests.keys().cloned().collect()
    }

    fn fetch_embeddings(&self, node_type: &str, ids: &BTreeSet<usize>) -> Result<Fetched, StoreError> {
        let man = self.manifest(node_type).ok_or_else(|| StoreError::UnknownType(node_type.to_string()))?;
        let table = &self.tables[node_type];
        for &id in ids {
            man.check_id(id)?;
        }
        let mut out = Fetched::default();
        for k in covering_chunks(ids, man.chunk_rows) {
            let range = man.chunk_range(k);
            let chunk: Vec<f32> = table.as_slice()[range.start * man.dim..range.end * man.dim].to_vec();
            out.bytes_loaded += chunk.len() as u64 * 4;
            for &id in ids.range(range.clone()) {
                let off = (id - range.start) * man.dim;
                out.rows.insert(id, chunk[off..off + man.dim].to_vec());
            }
            out.chunks_loaded.insert(k);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCoverage {
    pub node_type: String,
    pub chunks_loaded: usize,
    pub chunks_total: usize,
    pub bytes_loaded: u64,
    pub bytes_total: u64,
}

impl TypeCoverage {
    /// `chunks_loaded / chunks_total`; 1.0 for a type with no chunks.
    pub fn fraction(&self) -> f64 {
        if self.chunks_total == 0 {
            1.0
        } else {
            self.chunks_loaded as f64 / self.chunks_total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageReport {
    pub per_type: Vec<TypeCoverage>,
}

impl StorageReport {
    pub fn bytes_loaded(&self) -> u64 {
        self.per_type.iter().map(|t| t.bytes_loaded).sum()
    }

    pub fn bytes_total(&self) -> u64 {
        self.per_type.iter().map(|t| t.bytes_total).sum()
    }

    pub fn chunks_loaded(&self) -> usize {
        self.per_type.iter().map(|t| t.chunks_loaded).sum()
    }

    pub fn chunks_total(&self) -> usize {
        self.per_type.iter().map(|t| t.chunks_total).sum()
    }

    pub fn get(&self, node_type: &str) -> Option<&TypeCoverage> {
        self.per_type.iter().find(|t| t.node_type == node_type)
    }
}

/// Coverage of every type in `manifests` given the chunks a query loaded.
pub fn storage_report<'a>(
    manifests: impl IntoIterator<Item = &'a EmbeddingManifest>,
    loaded: &BTreeMap<String, BTreeSet<usize>>,
) -> StorageReport {
    let per_type = manifests
        .into_iter()
        .map(|m| {
            let chunks = loaded.get(&m.node_type);
            TypeCoverage {
                node_type: m.node_type.clone(),
                chunks_loaded: chunks.map_or(0, BTreeSet::len),
                chunks_total: m.chunk_count,
                bytes_loaded: chunks.map_or(0, |c| c.iter().map(|&k| m.chunk_bytes(k)).sum()),
                bytes_total: m.total_bytes(),
            }
        })
        .collect();
    StorageReport { per_type }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_arithmetic() {
        let m = EmbeddingManifest::new("T", 10, 4, 4).unwrap();
        assert_eq!(m.chunk_count, 3);
        assert_eq!((0..3).map(|k| m.chunk_range(k).len()).collect::<Vec<_>>(), [4, 4, 2]);
        assert_eq!(m.chunk_bytes(2), 2 * 4 * 4);
        assert_eq!(EmbeddingManifest::new("E", 0, 4, 4).unwrap().chunk_count, 0);
        assert_eq!(EmbeddingManifest::new("T", 1, 4, 0), Err(StoreError::ZeroChunkRows));
    }

    #[test]
    fn fetch_covers_exactly() {
        let data: Vec<f32> = (0..40).map(|x| x as f32).collect();
        let store = InMemoryStore::new([("T".to_string(), Matrix::from_vec(10, 4, data).unwrap())], 4).unwrap();
        let f = store.fetch_embeddings("T", &BTreeSet::new()).unwrap();
        assert!(f.rows.is_empty() && f.chunks_loaded.is_empty());
        let f = store.fetch_embeddings("T", &[1, 9].into_iter().collect()).unwrap();
        assert_eq!(f.chunks_loaded, [0, 2].into_iter().collect());
        assert_eq!(f.rows[&9], [36.0, 37.0, 38.0, 39.0]);
        assert_eq!(f.bytes_loaded, (4 + 2) * 16);
        assert!(matches!(
            store.fetch_embeddings("T", &[10].into_iter().collect()),
            Err(StoreError::OutOfRange { id: 10, .. })
        ));
    }

    #[test]
    fn report_fractions() {
        let m = EmbeddingManifest::new("T", 100, 2, 10).unwrap();
        let mut loaded = BTreeMap::new();
        loaded.insert("T".to_string(), [3].into_iter().collect());
        let r = storage_report([&m], &loaded);
        assert_eq!(r.get("T").unwrap().fraction(), 0.1);
        let all = (0..10).collect();
        loaded.insert("T".to_string(), all);
        assert_eq!(storage_report([&m], &loaded).get("T").unwrap().fraction(), 1.0);
    }
}
