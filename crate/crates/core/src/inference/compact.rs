use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::encode::{EncodingMaps, TaskTarget};
use super::extract::{node_inputs, InferenceSubgraph, NodeRef};
use super::InferenceError;
use crate::rgcn::{
    assemble_inputs, classify, forward, node_seed, score_links, seeded_vector, Edge, ForwardMode,
    Head, Hyper, LayerWeights, OpCounter, RgcnModel,
};
use crate::store::{storage_report, EmbeddingSource, StorageReport};
use crate::tensor::Matrix;

/// Subgraph edge density below which `auto` picks sparse aggregation.
pub const DEFAULT_DENSITY_THRESHOLD: f64 = 0.01;

/// Layer weights and head, without embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub hyper: Hyper,
    pub relations: Vec<String>,
    pub layers: Vec<LayerWeights<f32>>,
    pub head: Head,
}

impl ModelWeights {
    pub fn from_model(m: &RgcnModel) -> Self {
        ModelWeights { hyper: m.hyper, relations: m.relations.clone(), layers: m.layers.clone(), head: m.head.clone() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, LayerWeights::dim_in)
    }

    pub fn bytes(&self) -> u64 {
        let layers: usize = self.layers.iter().map(|l| l.self_loop.as_slice().len() * (l.relations.len() + 1)).sum();
        (layers + self.head.parameter_count()) as u64 * 4
    }
}

/// Query-specific model: full weights, and embedding rows only for the
/// subgraph's stored nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactModel {
    pub weights: ModelWeights,
    /// Per type, training row id to vector.
    pub sparse_embeddings: BTreeMap<String, BTreeMap<usize, Vec<f32>>>,
    /// Seeded vectors of the targets and other featureless nodes, by node text.
    pub target_init: BTreeMap<String, Vec<f64>>,
}

impl CompactModel {
    pub fn embedding_rows(&self) -> usize {
        self.sparse_embeddings.values().map(BTreeMap::len).sum()
    }

    /// Bytes of embedding rows held by the model.
    pub fn resident_embedding_bytes(&self) -> u64 {
        self.sparse_embeddings.values().flat_map(BTreeMap::values).map(|v| v.len() as u64 * 4).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

/// Cost record of one query. Timings are filled in by the caller.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub stage_ms: Vec<StageTiming>,
    pub coverage: StorageReport,
    pub bytes_loaded: u64,
    pub chunks_loaded: usize,
    pub chunks_total: usize,
    pub weight_bytes: u64,
    pub multiply_adds: u64,
    pub peak_embedding_bytes: u64,
    pub mode: Option<ForwardMode>,
    pub sg_nodes: usize,
    pub sg_edges: usize,
    pub targets: usize,
    pub cold_targets: usize,
    pub cold_nodes: usize,
}

impl QueryTrace {
    pub fn record(&mut self, stage: &str, ms: f64) {
        self.stage_ms.push(StageTiming { stage: stage.to_string(), ms });
    }

    pub fn total_ms(&self) -> f64 {
        self.stage_ms.iter().map(|s| s.ms).sum()
    }
}

/// Fetches the embedding rows the subgraph needs and seeds vectors for the
/// rest. Weights are taken whole.
pub fn instantiate<S: EmbeddingSource + ?Sized>(
    sg: &InferenceSubgraph,
    source: &S,
    weights: ModelWeights,
) -> Result<(CompactModel, QueryTrace), InferenceError> {
    let dim = weights.input_dim();
    let mut sparse_embeddings = BTreeMap::new();
    let mut loaded: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    let mut bytes_loaded = 0;
    for (ty, ids) in &sg.rows_by_type {
        let man = source.manifest(ty).ok_or_else(|| crate::store::StoreError::UnknownType(ty.clone()))?;
        if man.dim != dim {
            return Err(InferenceError::Mismatch(alloc::format!(
                "embeddings of {ty} have width {}, layer 0 expects {dim}",
                man.dim
            )));
        }
        let f = source.fetch_embeddings(ty, ids)?;
        bytes_loaded += f.bytes_loaded;
        loaded.insert(ty.clone(), f.chunks_loaded);
        sparse_embeddings.insert(ty.clone(), f.rows);
    }
    let mut target_init = BTreeMap::new();
    for r in &sg.refs {
        if let NodeRef::Seeded { key } = r {
            target_init
                .entry(key.clone())
                .or_insert_with(|| seeded_vector(node_seed(weights.hyper.seed, key), dim));
        }
    }
    let types = source.node_types();
    let coverage = storage_report(types.iter().filter_map(|t| source.manifest(t)), &loaded);
    let cm = CompactModel { weights, sparse_embeddings, target_init };
    let trace = QueryTrace {
        bytes_loaded,
        chunks_loaded: coverage.chunks_loaded(),
        chunks_total: coverage.chunks_total(),
        weight_bytes: cm.weights.bytes(),
        peak_embedding_bytes: cm.resident_embedding_bytes(),
        coverage,
        sg_nodes: sg.num_nodes(),
        sg_edges: sg.graph.edges().len(),
        targets: sg.targets.len(),
        cold_targets: sg.cold_targets.len(),
        cold_nodes: sg.cold_nodes,
        ..QueryTrace::default()
    };
    Ok((cm, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelect {
    #[default]
    Auto,
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub mode: ModeSelect,
    pub density_threshold: f64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions { mode: ModeSelect::Auto, density_threshold: DEFAULT_DENSITY_THRESHOLD }
    }
}

impl PredictOptions {
    pub fn resolve(&self, sg: &InferenceSubgraph) -> ForwardMode {
        match self.mode {
            ModeSelect::Sparse => ForwardMode::Sparse,
            ModeSelect::Dense => ForwardMode::Dense,
            ModeSelect::Auto if sg.graph.density() < self.density_threshold => ForwardMode::Sparse,
            ModeSelect::Auto => ForwardMode::Dense,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub target: String,
    pub label: String,
    pub class: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPrediction {
    pub target: String,
    /// Candidate tails by descending score; ties keep subgraph order.
    pub ranked: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "predictions", rename_all = "kebab-case")]
pub enum Predictions {
    Classes(Vec<ClassPrediction>),
    Links(Vec<LinkPrediction>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Classes(v) => v.len(),
            Predictions::Links(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn compact_inputs(cm: &CompactModel, sg: &InferenceSubgraph) -> Result<Matrix<f64>, InferenceError> {
    let dim = cm.weights.input_dim();
    let mut h = Matrix::zeros(sg.num_nodes(), dim);
    for (i, r) in sg.refs.iter().enumerate() {
        match r {
            NodeRef::Row { node_type, row } => {
                let v = cm
                    .sparse_embeddings
                    .get(node_type)
                    .and_then(|m| m.get(row))
                    .ok_or_else(|| InferenceError::Mismatch(alloc::format!("row {row} of {node_type} was not loaded")))?;
                for (o, &x) in h.row_mut(i).iter_mut().zip(v) {
                    *o = x.into();
                }
            }
            NodeRef::Seeded { key } => {
                let v = cm
                    .target_init
                    .get(key)
                    .ok_or_else(|| InferenceError::Mismatch(alloc::format!("no initial vector for {key}")))?;
                h.row_mut(i).copy_from_slice(v);
            }
            NodeRef::Zero => {}
        }
    }
    Ok(h)
}

fn head_predictions(
    layers: &[LayerWeights<f32>],
    head: &Head,
    h0: &Matrix<f64>,
    sg: &InferenceSubgraph,
    enc: &EncodingMaps,
    mode: ForwardMode,
) -> Result<(Predictions, u64), InferenceError> {
    if sg.graph.relation_count() > enc.relation_count() {
        return Err(InferenceError::Mismatch("subgraph uses more relations than the encoding".into()));
    }
    let mut counter = OpCounter::new();
    let out = if sg.num_nodes() == 0 {
        Matrix::zeros(0, layers.last().map_or(0, LayerWeights::dim_out))
    } else {
        forward(&sg.graph, h0, layers, mode, &mut counter)?
    };
    let preds = match (head, &enc.task) {
        (Head::Classifier { weight, bias }, TaskTarget::Classify { .. }) => {
            let mut rows = Matrix::zeros(sg.targets.len(), out.cols());
            for (k, &t) in sg.targets.iter().enumerate() {
                rows.row_mut(k).copy_from_slice(out.row(t));
            }
            let c = classify(&rows, weight, bias)?;
            let preds = sg
                .target_iris
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let class = c.labels[k];
                    let label = enc
                        .labels
                        .get(class)
                        .cloned()
                        .ok_or_else(|| InferenceError::Mismatch(alloc::format!("class {class} has no label")))?;
                    Ok(ClassPrediction { target: t.clone(), label, class, scores: c.scores.row(k).to_vec() })
                })
                .collect::<Result<_, InferenceError>>()?;
            Predictions::Classes(preds)
        }
        (Head::DistMult { relations }, TaskTarget::Link { predicate, tail_type }) => {
            let r = enc
                .relation_id(predicate)
                .ok_or_else(|| InferenceError::UnknownRelation(predicate.clone()))?;
            let candidates = sg.nodes_of_type(tail_type);
            let mut preds = Vec::with_capacity(sg.targets.len());
            for (k, &t) in sg.targets.iter().enumerate() {
                let cands: Vec<usize> = candidates.iter().copied().filter(|&c| c != t).collect();
                let edges: Vec<Edge> = cands.iter().map(|&c| Edge::new(t, r, c)).collect();
                let scores = score_links(&out, relations, &edges)?;
                let mut order: Vec<usize> = (0..cands.len()).collect();
                order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                let ranked = order.into_iter().map(|j| (sg.nodes[cands[j]].text().to_string(), scores[j])).collect();
                preds.push(LinkPrediction { target: sg.target_iris[k].clone(), ranked });
            }
            Predictions::Links(preds)
        }
        _ => return Err(InferenceError::Mismatch("model head does not match the task".into())),
    };
    Ok((preds, counter.multiply_adds()))
}

/// Runs the compact model over the subgraph and fills the forward-pass part of `trace`.
pub fn predict(
    cm: &CompactModel,
    sg: &InferenceSubgraph,
    enc: &EncodingMaps,
    opts: PredictOptions,
    trace: &mut QueryTrace,
) -> Result<Predictions, InferenceError> {
    let h0 = compact_inputs(cm, sg)?;
    let mode = opts.resolve(sg);
    let (preds, ops) = head_predictions(&cm.weights.layers, &cm.weights.head, &h0, sg, enc, mode)?;
    trace.mode = Some(mode);
    trace.multiply_adds = ops;
    Ok(preds)
}

/// Reference path: the fully loaded model over the same subgraph, with layer-0
/// inputs assembled from whole embedding tables exactly as in training.
pub fn predict_full(
    model: &RgcnModel,
    sg: &InferenceSubgraph,
    enc: &EncodingMaps,
    mode: ForwardMode,
) -> Result<(Predictions, u64), InferenceError> {
    let inputs = node_inputs(&sg.refs, enc, model.hyper.seed)?;
    let tables: Vec<Matrix<f32>> = enc
        .tables()
        .iter()
        .map(|(ty, rows)| match model.table(ty) {
            Some(t) => Ok(t.matrix.clone()),
            None if *rows == 0 => Ok(Matrix::zeros(0, model.input_dim())),
            None => Err(InferenceError::Mismatch(alloc::format!("model has no embeddings for {ty}"))),
        })
        .collect::<Result<_, _>>()?;
    let h0 = assemble_inputs(&inputs, &tables, model.input_dim())?;
    head_predictions(&model.layers, &model.head, &h0, sg, enc, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "kebab-case")]
pub enum Metrics {
    Accuracy { value: f64, per_class: BTreeMap<String, (usize, usize)> },
    HitsAt { k: usize, value: f64, positives: usize },
}

/// Accuracy with per-class `(correct, total)` for classification; Hits@k over
/// all true tails for link prediction, a tail outside the candidate list
/// counting as a miss.
pub fn evaluate(
    preds: &Predictions,
    labels: &BTreeMap<String, String>,
    tails: &BTreeMap<String, Vec<String>>,
    k: usize,
) -> Result<Metrics, InferenceError> {
    match preds {
        Predictions::Classes(ps) => {
            let missing: Vec<String> = ps.iter().filter(|p| !labels.contains_key(&p.target)).map(|p| p.target.clone()).collect();
            if !missing.is_empty() {
                return Err(InferenceError::MissingGroundTruth(missing));
            }
            let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
            let mut correct = 0;
            for p in ps {
                let truth = &labels[&p.target];
                let e = per_class.entry(truth.clone()).or_default();
                e.1 += 1;
                if *truth == p.label {
                    e.0 += 1;
                    correct += 1;
                }
            }
            let value = if ps.is_empty() { 0.0 } else { correct as f64 / ps.len() as f64 };
            Ok(Metrics::Accuracy { value, per_class })
        }
        Predictions::Links(ps) => {
            if k == 0 {
                return Err(crate::rgcn::ModelError::InvalidK.into());
            }
            let missing: Vec<String> = ps.iter().filter(|p| !tails.contains_key(&p.target)).map(|p| p.target.clone()).collect();
            if !missing.is_empty() {
                return Err(InferenceError::MissingGroundTruth(missing));
            }
            let (mut hits, mut positives) = (0, 0);
            for p in ps {
                for t in &tails[&p.target] {
                    positives += 1;
                    if p.ranked.iter().take(k).any(|(c, _)| c == t) {
                        hits += 1;
                    }
                }
            }
            let value = if positives == 0 { 0.0 } else { hits as f64 / positives as f64 };
            Ok(Metrics::HitsAt { k, value, positives })
        }
    }
}
