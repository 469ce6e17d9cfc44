//! On-disk model stores.
//!
//! ```text
//! <root>/<task>/embeddings/index.json
//! <root>/<task>/embeddings/<type-slug>/manifest.json
//! <root>/<task>/embeddings/<type-slug>/chunk_<k>.bin
//! <root>/<task>/params/manifest.json
//! <root>/<task>/params/layer_<l>/<relation-slug>.bin
//! <root>/<task>/params/layer_<l>/self_loop.bin
//! <root>/<task>/params/head/<name>.bin
//! ```
//!
//! Every `.bin` file is raw little-endian `f32`, row-major, without a header.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use kgq_core::inference::ModelWeights;
use kgq_core::rgcn::{Head, Hyper, LayerWeights, RgcnModel};
use kgq_core::store::{EmbeddingManifest, EmbeddingSource, Fetched, StoreError};
use kgq_core::tensor::Matrix;
use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiskError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DiskError + '_ {
    move |source| DiskError::Io { path: path.to_path_buf(), source }
}

/// `.` stays escaped so no slug is `.` or `..`.
const SLUG: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'~');

/// File-system-safe name for an IRI or type name.
pub fn slug(name: &str) -> String {
    utf8_percent_encode(name, SLUG).to_string()
}

pub fn unslug(slug: &str) -> String {
    percent_decode_str(slug).decode_utf8_lossy().into_owned()
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DiskError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| DiskError::Json { path: path.to_path_buf(), source })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), DiskError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| DiskError::Json { path: path.to_path_buf(), source })?;
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    fs::write(path, text + "\n").map_err(io(path))
}

fn write_f32(path: &Path, data: &[f32]) -> Result<(), DiskError> {
    let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(io(path))
}

fn read_f32(path: &Path, expected_len: usize) -> Result<Vec<f32>, DiskError> {
    let bytes = fs::read(path).map_err(io(path))?;
    if bytes.len() != expected_len * 4 {
        return Err(DiskError::Corrupt(format!(
            "{} has {} bytes, manifest implies {}",
            path.display(),
            bytes.len(),
            expected_len * 4
        )));
    }
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

fn create_dir(path: &Path) -> Result<(), DiskError> {
    fs::create_dir_all(path).map_err(io(path))
}

/// Per-type, row-wise chunked embeddings.
#[derive(Debug, Clone)]
pub struct ChunkedEmbeddingStore {
    dir: PathBuf,
    manifests: BTreeMap<String, EmbeddingManifest>,
}

impl ChunkedEmbeddingStore {
    /// Writes every table in row order, `chunk_rows` rows per file.
    pub fn write(dir: &Path, tables: &[(String, &Matrix<f32>)], chunk_rows: usize) -> Result<Self, DiskError> {
        create_dir(dir)?;
        let mut manifests = BTreeMap::new();
        for (ty, m) in tables {
            let man = EmbeddingManifest::new(ty.clone(), m.rows(), m.cols(), chunk_rows)?;
            let tdir = dir.join(slug(ty));
            create_dir(&tdir)?;
            for k in 0..man.chunk_count {
                let r = man.chunk_range(k);
                write_f32(&tdir.join(format!("chunk_{k}.bin")), &m.as_slice()[r.start * man.dim..r.end * man.dim])?;
            }
            write_json(&tdir.join("manifest.json"), &man)?;
            manifests.insert(ty.clone(), man);
        }
        let types: Vec<&String> = manifests.keys().collect();
        write_json(&dir.join("index.json"), &types)?;
        Ok(ChunkedEmbeddingStore { dir: dir.to_path_buf(), manifests })
    }

    pub fn open(dir: &Path) -> Result<Self, DiskError> {
        let types: Vec<String> = read_json(&dir.join("index.json"))?;
        let mut manifests = BTreeMap::new();
        for ty in types {
            let man: EmbeddingManifest = read_json(&dir.join(slug(&ty)).join("manifest.json"))?;
            man.validate()?;
            if man.node_type != ty {
                return Err(DiskError::Corrupt(format!("manifest under {ty} names type {}", man.node_type)));
            }
            manifests.insert(ty, man);
        }
        Ok(ChunkedEmbeddingStore { dir: dir.to_path_buf(), manifests })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn chunk_path(&self, node_type: &str, k: usize) -> PathBuf {
        self.dir.join(slug(node_type)).join(format!("chunk_{k}.bin"))
    }

    fn read_chunk(&self, man: &EmbeddingManifest, k: usize) -> Result<Vec<f32>, DiskError> {
        read_f32(&self.chunk_path(&man.node_type, k), man.chunk_range(k).len() * man.dim)
    }

    /// Reads every chunk of every type.
    pub fn load_all(&self) -> Result<BTreeMap<String, Matrix<f32>>, DiskError> {
        let mut out = BTreeMap::new();
        for (ty, man) in &self.manifests {
            let mut data = Vec::with_capacity(man.num_rows * man.dim);
            for k in 0..man.chunk_count {
                data.extend(self.read_chunk(man, k)?);
            }
            let m = Matrix::from_vec(man.num_rows, man.dim, data).expect("chunk lengths checked against manifest");
            out.insert(ty.clone(), m);
        }
        Ok(out)
    }

    /// Checks every chunk file against the manifest byte-length invariant.
    pub fn check_files(&self) -> Result<(), DiskError> {
        for man in self.manifests.values() {
            for k in 0..man.chunk_count {
                let p = self.chunk_path(&man.node_type, k);
                let len = fs::metadata(&p).map_err(io(&p))?.len();
                if len != man.chunk_bytes(k) {
                    return Err(DiskError::Corrupt(format!("{} has {len} bytes, expected {}", p.display(), man.chunk_bytes(k))));
                }
            }
        }
        Ok(())
    }

    pub fn total_bytes(&self) -> u64 {
        self.manifests.values().map(EmbeddingManifest::total_bytes).sum()
    }
}

impl EmbeddingSource for ChunkedEmbeddingStore {
    fn manifest(&self, node_type: &str) -> Option<&EmbeddingManifest> {
        self.manifests.get(node_type)
    }

    fn node_types(&self) -> Vec<String> {
        self.manifests.keys().cloned().collect()
    }

    fn fetch_embeddings(&self, node_type: &str, ids: &BTreeSet<usize>) -> Result<Fetched, StoreError> {
        let man = self.manifests.get(node_type).ok_or_else(|| StoreError::UnknownType(node_type.to_string()))?;
        for &id in ids {
            man.check_id(id)?;
        }
        let mut out = Fetched::default();
        for k in kgq_core::store::covering_chunks(ids, man.chunk_rows) {
            let chunk = self.read_chunk(man, k).map_err(|e| match e {
                DiskError::Io { .. } => StoreError::Io(e.to_string()),
                e => StoreError::Corrupt(e.to_string()),
            })?;
            out.bytes_loaded += chunk.len() as u64 * 4;
            let range = man.chunk_range(k);
            for &id in ids.range(range.clone()) {
                let off = (id - range.start) * man.dim;
                out.rows.insert(id, chunk[off..off + man.dim].to_vec());
            }
            out.chunks_loaded.insert(k);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum HeadManifest {
    Classifier { dim: usize, classes: usize },
    DistMult { relations: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamManifest {
    hyper: Hyper,
    relations: Vec<String>,
    /// `(dim_in, dim_out)` per layer.
    layers: Vec<(usize, usize)>,
    head: HeadManifest,
}

/// Layer weights, one file per relation, and the task head.
#[derive(Debug, Clone)]
pub struct ParameterStore {
    dir: PathBuf,
    manifest: ParamManifest,
}

impl ParameterStore {
    pub fn write(dir: &Path, w: &ModelWeights) -> Result<Self, DiskError> {
        create_dir(dir)?;
        let mut slugs = BTreeSet::new();
        for r in &w.relations {
            if !slugs.insert(slug(r)) || slug(r) == "self_loop" {
                return Err(DiskError::Corrupt(format!("relation name {r} does not have a unique file name")));
            }
        }
        for (l, layer) in w.layers.iter().enumerate() {
            let ldir = dir.join(format!("layer_{l}"));
            create_dir(&ldir)?;
            for (r, m) in w.relations.iter().zip(&layer.relations) {
                write_f32(&ldir.join(format!("{}.bin", slug(r))), m.as_slice())?;
            }
            write_f32(&ldir.join("self_loop.bin"), layer.self_loop.as_slice())?;
        }
        let hdir = dir.join("head");
        create_dir(&hdir)?;
        let head = match &w.head {
            Head::Classifier { weight, bias } => {
                write_f32(&hdir.join("weight.bin"), weight.as_slice())?;
                write_f32(&hdir.join("bias.bin"), bias)?;
                HeadManifest::Classifier { dim: weight.rows(), classes: weight.cols() }
            }
            Head::DistMult { relations } => {
                write_f32(&hdir.join("relations.bin"), relations.as_slice())?;
                HeadManifest::DistMult { relations: relations.rows(), dim: relations.cols() }
            }
        };
        let manifest = ParamManifest {
            hyper: w.hyper,
            relations: w.relations.clone(),
            layers: w.layers.iter().map(|l| (l.dim_in(), l.dim_out())).collect(),
            head,
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(ParameterStore { dir: dir.to_path_buf(), manifest })
    }

    pub fn open(dir: &Path) -> Result<Self, DiskError> {
        Ok(ParameterStore { dir: dir.to_path_buf(), manifest: read_json(&dir.join("manifest.json"))? })
    }

    fn matrix(&self, path: PathBuf, rows: usize, cols: usize, what: &str) -> Result<Matrix<f32>, DiskError> {
        if !path.exists() {
            return Err(DiskError::Corrupt(format!("missing weights for {what}: {}", path.display())));
        }
        let data = read_f32(&path, rows * cols)?;
        Ok(Matrix::from_vec(rows, cols, data).expect("length checked"))
    }

    /// Restores every weight bit-exactly.
    pub fn load_weights(&self) -> Result<ModelWeights, DiskError> {
        let m = &self.manifest;
        let mut layers = Vec::with_capacity(m.layers.len());
        for (l, &(fi, fo)) in m.layers.iter().enumerate() {
            if l > 0 && m.layers[l - 1].1 != fi {
                return Err(DiskError::Corrupt(format!("layer {l} input width {fi} does not chain")));
            }
            let ldir = self.dir.join(format!("layer_{l}"));
            let relations = m
                .relations
                .iter()
                .map(|r| self.matrix(ldir.join(format!("{}.bin", slug(r))), fi, fo, &format!("layer {l}, relation {r}")))
                .collect::<Result<_, _>>()?;
            let self_loop = self.matrix(ldir.join("self_loop.bin"), fi, fo, &format!("layer {l}, self loop"))?;
            layers.push(LayerWeights { relations, self_loop });
        }
        let hdir = self.dir.join("head");
        let head = match m.head {
            HeadManifest::Classifier { dim, classes } => Head::Classifier {
                weight: self.matrix(hdir.join("weight.bin"), dim, classes, "classifier weight")?,
                bias: self.matrix(hdir.join("bias.bin"), 1, classes, "classifier bias")?.into_vec(),
            },
            HeadManifest::DistMult { relations, dim } => {
                Head::DistMult { relations: self.matrix(hdir.join("relations.bin"), relations, dim, "decoder")? }
            }
        };
        Ok(ModelWeights { hyper: m.hyper, relations: m.relations.clone(), layers, head })
    }

    pub fn bytes(&self) -> u64 {
        let m = &self.manifest;
        let layers: usize = m.layers.iter().map(|(fi, fo)| fi * fo * (m.relations.len() + 1)).sum();
        let head = match m.head {
            HeadManifest::Classifier { dim, classes } => dim * classes + classes,
            HeadManifest::DistMult { relations, dim } => relations * dim,
        };
        (layers + head) as u64 * 4
    }
}

/// Directories of one task's stores.
pub fn store_dirs(root: &Path, task: &str) -> (PathBuf, PathBuf) {
    let base = root.join(slug(task));
    (base.join("embeddings"), base.join("params"))
}

/// Splits a trained model into an embedding store and a parameter store.
pub fn decompose(
    model: &RgcnModel,
    chunk_rows: usize,
    root: &Path,
    task: &str,
) -> Result<(ChunkedEmbeddingStore, ParameterStore), DiskError> {
    if chunk_rows == 0 {
        return Err(StoreError::ZeroChunkRows.into());
    }
    model.validate().map_err(|e| DiskError::Corrupt(e.to_string()))?;
    let (edir, pdir) = store_dirs(root, task);
    let tables: Vec<(String, &Matrix<f32>)> = model.embeddings.iter().map(|t| (t.node_type.clone(), &t.matrix)).collect();
    let emb = ChunkedEmbeddingStore::write(&edir, &tables, chunk_rows)?;
    let params = ParameterStore::write(&pdir, &ModelWeights::from_model(model))?;
    Ok((emb, params))
}

/// Reassembles the full model from both stores.
pub fn load_model(emb: &ChunkedEmbeddingStore, params: &ParameterStore) -> Result<RgcnModel, DiskError> {
    let w = params.load_weights()?;
    let embeddings = emb
        .load_all()?
        .into_iter()
        .map(|(node_type, matrix)| kgq_core::rgcn::EmbeddingTable { node_type, matrix })
        .collect();
    Ok(RgcnModel { hyper: w.hyper, relations: w.relations, layers: w.layers, embeddings, head: w.head })
}
