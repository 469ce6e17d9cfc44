//! Full-batch trainer with hand-written backpropagation and Adam.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::EncodedGraph;
use super::init::{assemble_inputs, embedding_rows, xavier_matrix, NodeInput};
use super::layer::{rgcn_layer_backward, rgcn_layer_forward, Activation, LayerWeights, OpCounter};
use super::model::{EmbeddingTable, Head, Hyper, RgcnModel};
use super::{Edge, ModelError};
use crate::tensor::{axpy_mat_vec, axpy_outer, axpy_vec_mat, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub lr: f64,
    pub layers: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    /// Corrupted tails sampled per positive triple (link prediction only).
    pub negatives: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper { epochs: 200, lr: 0.01, layers: 2, hidden_dim: 16, seed: 0, negatives: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainTask {
    /// `(node, class)` pairs.
    NodeClassification { labels: Vec<(usize, usize)>, num_classes: usize },
    /// Positive triples; negatives replace the tail with a node from `candidates`.
    LinkPrediction { positives: Vec<Edge>, candidates: Vec<usize> },
}

/// Everything the trainer needs besides hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct TrainProblem<'a> {
    pub graph: &'a EncodedGraph,
    /// Layer-0 source of every node.
    pub inputs: &'a [NodeInput],
    /// Embedding tables as `(node type, rows)`; [`NodeInput::Row`] indexes into this.
    pub tables: &'a [(String, usize)],
    /// Relation names by id.
    pub relations: &'a [String],
    pub task: &'a TrainTask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    Classifier { weight: Matrix<f64>, bias: Vec<f64> },
    DistMult { relations: Matrix<f64> },
}

/// Trainable parameters in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LayerWeights<f64>>,
    pub tables: Vec<Matrix<f64>>,
    pub head: HeadParams,
}

impl Parameters {
    /// Xavier-initialised parameters, drawn in a fixed order from `seed`.
    pub fn init(problem: &TrainProblem<'_>, hyper: &TrainHyper) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let f = hyper.hidden_dim;
        let r = problem.relations.len();
        let layers = (0..hyper.layers)
            .map(|_| LayerWeights {
                relations: (0..r).map(|_| xavier_matrix(f, f, &mut rng)).collect(),
                self_loop: xavier_matrix(f, f, &mut rng),
            })
            .collect();
        let tables = problem.tables.iter().map(|(_, rows)| embedding_rows(*rows, f, &mut rng)).collect();
        let head = match problem.task {
            TrainTask::NodeClassification { num_classes, .. } => HeadParams::Classifier {
                weight: xavier_matrix(f, *num_classes, &mut rng),
                bias: alloc::vec![0.0; *num_classes],
            },
            TrainTask::LinkPrediction { .. } => HeadParams::DistMult { relations: embedding_rows(r, f, &mut rng) },
        };
        Parameters { layers, tables, head }
    }

    pub fn zeros_like(&self) -> Self {
        let mut p = self.clone();
        for s in p.slices_mut() {
            s.iter_mut().for_each(|x| *x = 0.0);
        }
        p
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.extend(l.relations.iter().map(Matrix::as_slice));
            out.push(l.self_loop.as_slice());
        }
        out.extend(self.tables.iter().map(Matrix::as_slice));
        match &self.head {
            HeadParams::Classifier { weight, bias } => {
                out.push(weight.as_slice());
                out.push(bias);
            }
            HeadParams::DistMult { relations } => out.push(relations.as_slice()),
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.extend(l.relations.iter_mut().map(Matrix::as_mut_slice));
            out.push(l.self_loop.as_mut_slice());
        }
        out.extend(self.tables.iter_mut().map(Matrix::as_mut_slice));
        match &mut self.head {
            HeadParams::Classifier { weight, bias } => {
                out.push(weight.as_mut_slice());
                out.push(bias);
            }
            HeadParams::DistMult { relations } => out.push(relations.as_mut_slice()),
        }
        out
    }

    /// All parameters in a fixed order: layers, tables, head.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[k..k + s.len()]);
            k += s.len();
        }
        assert_eq!(k, flat.len(), "flat parameter length mismatch");
    }

    /// Rounds to single precision and attaches names.
    pub fn into_model(self, problem: &TrainProblem<'_>, hyper: &TrainHyper) -> RgcnModel {
        let to32 = |x: f64| x as f32;
        RgcnModel {
            hyper: Hyper { layers: hyper.layers, hidden_dim: hyper.hidden_dim, seed: hyper.seed },
            relations: problem.relations.to_vec(),
            layers: self.layers.iter().map(|l| l.map(to32)).collect(),
            embeddings: self
                .tables
                .iter()
                .zip(problem.tables)
                .map(|(m, (name, _))| EmbeddingTable { node_type: name.clone(), matrix: m.map(to32) })
                .collect(),
            head: match self.head {
                HeadParams::Classifier { weight, bias } => Head::Classifier {
                    weight: weight.map(to32),
                    bias: bias.into_iter().map(to32).collect(),
                },
                HeadParams::DistMult { relations } => Head::DistMult { relations: relations.map(to32) },
            },
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn validate(problem: &TrainProblem<'_>, hyper: &TrainHyper) -> Result<(), ModelError> {
    let g = problem.graph;
    if hyper.layers == 0 || hyper.hidden_dim == 0 {
        return Err(ModelError::Invalid("layers and hidden_dim must be positive".into()));
    }
    if problem.inputs.len() != g.num_nodes() {
        return Err(ModelError::DimMismatch(alloc::format!(
            "{} node inputs for {} nodes",
            problem.inputs.len(),
            g.num_nodes()
        )));
    }
    if problem.relations.len() < g.relation_count() {
        return Err(ModelError::DimMismatch("fewer relation names than graph relations".into()));
    }
    let n = g.num_nodes();
    match problem.task {
        TrainTask::NodeClassification { labels, num_classes } => {
            if labels.is_empty() {
                return Err(ModelError::Invalid("no labelled targets".into()));
            }
            if let Some(&(v, c)) = labels.iter().find(|&&(v, c)| v >= n || c >= *num_classes) {
                return Err(ModelError::OutOfRange(alloc::format!("label ({v}, {c})")));
            }
        }
        TrainTask::LinkPrediction { positives, candidates } => {
            if positives.is_empty() {
                return Err(ModelError::Invalid("no positive triples".into()));
            }
            if let Some(e) = positives.iter().find(|e| e.src >= n || e.dst >= n || e.rel >= problem.relations.len()) {
                return Err(ModelError::OutOfRange(alloc::format!("positive ({}, {}, {})", e.src, e.rel, e.dst)));
            }
            if hyper.negatives > 0 && candidates.is_empty() {
                return Err(ModelError::Invalid("negative sampling needs candidates".into()));
            }
            if candidates.iter().any(|&c| c >= n) {
                return Err(ModelError::OutOfRange("negative candidate".into()));
            }
        }
    }
    Ok(())
}

/// Replaces the tail of each positive `k` times with a uniformly drawn candidate.
pub fn sample_negatives<R: Rng>(positives: &[Edge], candidates: &[usize], k: usize, rng: &mut R) -> Vec<Edge> {
    let mut out = Vec::with_capacity(positives.len() * k);
    for e in positives {
        for _ in 0..k {
            out.push(Edge::new(e.src, e.rel, candidates[rng.gen_range(0..candidates.len())]));
        }
    }
    out
}

/// Loss and its exact gradient. For link prediction `negatives` is the fixed
/// negative sample; it is ignored for node classification.
pub fn loss_and_gradient(
    problem: &TrainProblem<'_>,
    params: &Parameters,
    negatives: &[Edge],
) -> Result<(f64, Parameters), ModelError> {
    let g = problem.graph;
    let dim = params.layers.first().map_or(0, LayerWeights::dim_in);
    let mut counter = OpCounter::new();
    let mut hs = alloc::vec![assemble_inputs(problem.inputs, &params.tables, dim)?];
    let mut pres = Vec::with_capacity(params.layers.len());
    for (l, layer) in params.layers.iter().enumerate() {
        let pre = rgcn_layer_forward(g, &hs[l], layer, Activation::Identity, &mut counter)?;
        let mut h = pre.clone();
        if l + 1 < params.layers.len() {
            h.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
        }
        pres.push(pre);
        hs.push(h);
    }
    let out = hs.last().expect("at least the input");
    let mut grad = params.zeros_like();
    let mut d = Matrix::zeros(out.rows(), out.cols());
    let mut loss = 0.0;
    match (&params.head, &mut grad.head, problem.task) {
        (
            HeadParams::Classifier { weight, bias },
            HeadParams::Classifier { weight: gw, bias: gb },
            TrainTask::NodeClassification { labels, .. },
        ) => {
            let c = bias.len();
            let scale = 1.0 / labels.len() as f64;
            let mut scores = alloc::vec![0.0; c];
            for &(v, y) in labels {
                scores.copy_from_slice(bias);
                axpy_vec_mat(out.row(v), weight.as_slice(), c, 1.0, &mut scores);
                let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| libm::exp(s - m)).sum();
                loss += scale * (m + libm::log(z) - scores[y]);
                for (k, s) in scores.iter_mut().enumerate() {
                    *s = scale * (libm::exp(*s - m) / z - if k == y { 1.0 } else { 0.0 });
                }
                axpy_outer(out.row(v), &scores, 1.0, gw.as_mut_slice());
                gb.iter_mut().zip(&scores).for_each(|(a, b)| *a += b);
                axpy_mat_vec(weight.as_slice(), c, &scores, 1.0, d.row_mut(v));
            }
        }
        (
            HeadParams::DistMult { relations },
            HeadParams::DistMult { relations: gr },
            TrainTask::LinkPrediction { positives, .. },
        ) => {
            let groups = [(positives.as_slice(), -1.0), (negatives, 1.0)];
            for (edges, sign) in groups {
                if edges.is_empty() {
                    continue;
                }
                let scale = 1.0 / edges.len() as f64;
                for e in edges {
                    let (h, r, t) = (out.row(e.src), relations.row(e.rel), out.row(e.dst));
                    let s: f64 = h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum();
                    // positives: softplus(-s); negatives: softplus(s)
                    loss += scale * softplus(sign * s);
                    let ds = scale * sign * sigmoid(sign * s);
                    for k in 0..h.len() {
                        let (hk, rk, tk) = (h[k], r[k], t[k]);
                        gr.row_mut(e.rel)[k] += ds * hk * tk;
                        d.row_mut(e.src)[k] += ds * rk * tk;
                        d.row_mut(e.dst)[k] += ds * rk * hk;
                    }
                }
            }
        }
        _ => return Err(ModelError::Invalid("head does not match task".into())),
    }
    for l in (0..params.layers.len()).rev() {
        if l + 1 < params.layers.len() {
            for (dv, &p) in d.as_mut_slice().iter_mut().zip(pres[l].as_slice()) {
                if p <= 0.0 {
                    *dv = 0.0;
                }
            }
        }
        d = rgcn_layer_backward(g, &hs[l], &params.layers[l], &d, &mut grad.layers[l]);
    }
    for (i, input) in problem.inputs.iter().enumerate() {
        if let NodeInput::Row { table, row } = *input {
            let dst = grad.tables[table].row_mut(row);
            dst.iter_mut().zip(d.row(i)).for_each(|(a, b)| *a += b);
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: RgcnModel,
    /// Loss before each update.
    pub losses: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Trains with full-batch Adam. Deterministic for a given seed.
pub fn train(problem: &TrainProblem<'_>, hyper: &TrainHyper) -> Result<TrainReport, ModelError> {
    validate(problem, hyper)?;
    let mut params = Parameters::init(problem, hyper);
    let total = params.flatten().len();
    let (mut m, mut v) = (alloc::vec![0.0; total], alloc::vec![0.0; total]);
    let mut neg_rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5_eed0_f9e9_a7e5);
    let mut losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let negatives = match problem.task {
            TrainTask::LinkPrediction { positives, candidates } if hyper.negatives > 0 => {
                sample_negatives(positives, candidates, hyper.negatives, &mut neg_rng)
            }
            _ => Vec::new(),
        };
        let (loss, grad) = loss_and_gradient(problem, &params, &negatives)?;
        if !loss.is_finite() {
            return Err(ModelError::Divergence { epoch });
        }
        losses.push(loss);
        let t = (epoch + 1) as f64;
        let (c1, c2) = (1.0 - libm::pow(BETA1, t), 1.0 - libm::pow(BETA2, t));
        let mut k = 0;
        for (p, gs) in params.slices_mut().into_iter().zip(grad.slices()) {
            for (x, &gi) in p.iter_mut().zip(gs) {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * gi;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * gi * gi;
                *x -= hyper.lr * (m[k] / c1) / (libm::sqrt(v[k] / c2) + EPS);
                k += 1;
            }
        }
    }
    Ok(TrainReport { model: params.into_model(problem, hyper), losses })
}
