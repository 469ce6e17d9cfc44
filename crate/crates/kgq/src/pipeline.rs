//! Command implementations: ingest, template generation, training,
//! decomposition, inference and the partial-versus-full benchmark.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kgq_core::graph::IngestError;
use kgq_core::inference::{
    encode_subgraph, evaluate, instantiate, labels_from_graph, predict, predict_full, prepare_training, query_triples,
    tails_from_graph, EncodingMaps, InferenceError, Metrics, PredictOptions, Predictions, QueryTrace,
    TaskTarget,
};
use kgq_core::rgcn::{ForwardMode, RgcnModel, TrainHyper};
use kgq_core::schema::compute_schema_stats;
use kgq_core::sparql::{QueryAst, QueryError};
use kgq_core::template::{generate_template, GenerateOptions, LlmTransport, QueryTemplate, TemplateError};
use kgq_core::{SchemaStats, Term, TripleFormat, TripleGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, TaskConfig};
use crate::disk::{self, ChunkedEmbeddingStore, DiskError, ParameterStore};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Disk(#[from] DiskError),
    #[error("{path}: {source}")]
    Ingest { path: PathBuf, source: IngestError },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("template {path}: {source}")]
    TemplateParse { path: PathBuf, source: QueryError },
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    /// 2 verification or generation failure, 3 data or encoding mismatch,
    /// 4 I/O, 1 anything else (bad configuration).
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Template(TemplateError::Verification { .. } | TemplateError::Generation { .. }) => 2,
            PipelineError::TemplateParse { .. } => 2,
            PipelineError::Template(TemplateError::Transport(_)) => 4,
            PipelineError::Template(TemplateError::Config(_)) => 1,
            PipelineError::Config(ConfigError::Disk(d)) | PipelineError::Disk(d) => disk_code(d),
            PipelineError::Config(ConfigError::Invalid(_)) => 1,
            PipelineError::Ingest { .. } | PipelineError::Inference(_) | PipelineError::Data(_) => 3,
        }
    }
}

fn disk_code(d: &DiskError) -> i32 {
    match d {
        DiskError::Io { .. } => 4,
        DiskError::Json { .. } | DiskError::Corrupt(_) | DiskError::Store(_) => 3,
    }
}

fn read_text(path: &Path) -> Result<String, DiskError> {
    fs::read_to_string(path).map_err(|source| DiskError::Io { path: path.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), DiskError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| DiskError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| DiskError::Io { path: path.to_path_buf(), source })
}

pub fn load_graph(path: &Path, format: &str) -> Result<TripleGraph, PipelineError> {
    let fmt = TripleFormat::from_tag(format).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let text = read_text(path)?;
    TripleGraph::ingest(&text, fmt).map_err(|source| PipelineError::Ingest { path: path.to_path_buf(), source })
}

pub fn load_template(path: &Path) -> Result<QueryTemplate, PipelineError> {
    QueryTemplate::from_text(read_text(path)?).map_err(|source| PipelineError::TemplateParse { path: path.to_path_buf(), source })
}

/// One IRI per line; blank lines and `#` comments are skipped.
pub fn read_targets(path: &Path) -> Result<Vec<String>, PipelineError> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.trim_start_matches('<').trim_end_matches('>').to_string())
        .collect())
}

/// Parses `kg` and writes `graph.tsv` (canonical snapshot) and
/// `schema_stats.tsv` under `out`.
pub fn ingest(kg: &Path, format: &str, out: &Path) -> Result<(TripleGraph, SchemaStats), PipelineError> {
    let g = load_graph(kg, format)?;
    if g.is_empty() {
        log::warn!("{} contains no triples", kg.display());
    }
    let stats = compute_schema_stats(&g);
    write_text(&out.join("graph.tsv"), &g.to_tsv())?;
    write_text(&out.join("schema_stats.tsv"), &stats.to_tsv())?;
    Ok((g, stats))
}

pub fn provenance_path(template: &Path) -> PathBuf {
    let mut name = template.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    template.with_file_name(name)
}

/// Runs template generation and writes the template and its provenance
/// sidecar. On verification failure nothing is written.
pub fn gen_template<L: LlmTransport + ?Sized>(cfg: &TaskConfig, llm: &L) -> Result<QueryTemplate, PipelineError> {
    let stats = SchemaStats::parse_tsv(&read_text(&cfg.schema_stats)?)
        .map_err(|source| PipelineError::Ingest { path: cfg.schema_stats.clone(), source })?;
    let opts = GenerateOptions { top_k: cfg.top_k, ..GenerateOptions::default() };
    let q = generate_template(&cfg.task_spec(), &stats, llm, &opts)?;
    let mut text = q.text.trim_end().to_string();
    text.push('\n');
    write_text(&cfg.template, &text)?;
    disk::write_json(&provenance_path(&cfg.template), &q.provenance)?;
    Ok(q)
}

fn expand_with(template: &QueryAst) -> impl Fn(&str) -> String + '_ {
    |name: &str| template.prefixes.expand(name)
}

/// Every node whose type is `target_type`, in IRI order.
pub fn nodes_of_type(g: &TripleGraph, target_type: &str) -> Vec<String> {
    let Some(ty) = g.lookup_iri(target_type) else {
        return Vec::new();
    };
    let mut out: Vec<String> = g.nodes_of_type(ty).into_iter().map(|n| g.term(n).text().to_string()).collect();
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub targets: usize,
    pub sg_nodes: usize,
    pub sg_edges: usize,
    pub relations: usize,
    pub embedding_bytes: u64,
    pub parameter_bytes: u64,
    pub losses: Vec<f64>,
}

/// Trains on `g` and returns the model with its encodings.
pub fn train_model(
    template: &QueryAst,
    g: &TripleGraph,
    targets: &[String],
    target_type: &str,
    task: TaskTarget,
    hyper: &TrainHyper,
    batch_size: usize,
) -> Result<(RgcnModel, EncodingMaps, TrainSummary), PipelineError> {
    let ts = prepare_training(template, g, targets, target_type, task, batch_size)?;
    let report = ts.train(hyper)?;
    let summary = TrainSummary {
        targets: ts.sg.targets.len(),
        sg_nodes: ts.sg.num_nodes(),
        sg_edges: ts.sg.graph.edges().len(),
        relations: ts.enc.relations.len(),
        embedding_bytes: report.model.embedding_bytes(),
        parameter_bytes: report.model.parameter_bytes(),
        losses: report.losses,
    };
    Ok((report.model, ts.enc, summary))
}

pub fn train(cfg: &TaskConfig) -> Result<TrainSummary, PipelineError> {
    let g = load_graph(&cfg.graph, &cfg.format)?;
    let q = load_template(&cfg.template)?;
    let expand = expand_with(&q.parsed);
    let target_type = expand(&cfg.target_type);
    let targets = match &cfg.train_targets {
        Some(p) => read_targets(p)?,
        None => nodes_of_type(&g, &target_type),
    };
    let task = cfg.task_target(&expand);
    let (model, enc, summary) = train_model(&q.parsed, &g, &targets, &target_type, task, &cfg.train_hyper(), cfg.batch_size)?;
    disk::write_json(&cfg.model_path(), &model)?;
    disk::write_json(&cfg.encodings_path(), &enc)?;
    disk::write_json(&cfg.out_dir.join("train_summary.json"), &summary)?;
    Ok(summary)
}

pub fn decompose(cfg: &TaskConfig) -> Result<(ChunkedEmbeddingStore, ParameterStore), PipelineError> {
    let model: RgcnModel = disk::read_json(&cfg.model_path())?;
    Ok(disk::decompose(&model, cfg.chunk_rows, &cfg.store_root, &cfg.task)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOptions {
    pub batch_size: usize,
    /// Concurrent template batches.
    pub parallel: usize,
    pub predict: PredictOptions,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions { batch_size: 256, parallel: 1, predict: PredictOptions::default() }
    }
}

impl QueryOptions {
    pub fn from_config(cfg: &TaskConfig) -> Self {
        QueryOptions {
            batch_size: cfg.batch_size,
            parallel: cfg.parallel,
            predict: PredictOptions { mode: cfg.mode, density_threshold: cfg.density_threshold },
        }
    }
}

/// Full-model reference run over the same targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FullRun {
    pub predictions: Predictions,
    pub load_ms: f64,
    pub predict_ms: f64,
    pub bytes_loaded: u64,
    pub multiply_adds: u64,
}

/// Everything a query needs at inference time. No language model is involved.
#[derive(Debug, Clone)]
pub struct Engine {
    pub graph: TripleGraph,
    pub template: QueryAst,
    pub enc: EncodingMaps,
    pub embeddings: ChunkedEmbeddingStore,
    pub params: ParameterStore,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Engine {
    pub fn open(cfg: &TaskConfig) -> Result<Self, PipelineError> {
        let graph = load_graph(&cfg.graph, &cfg.format)?;
        Self::open_with_graph(cfg, graph)
    }

    pub fn open_with_graph(cfg: &TaskConfig, graph: TripleGraph) -> Result<Self, PipelineError> {
        let template = load_template(&cfg.template)?.parsed;
        let enc: EncodingMaps = disk::read_json(&cfg.encodings_path())?;
        enc.validate()?;
        let (edir, pdir) = disk::store_dirs(&cfg.store_root, &cfg.task);
        Ok(Engine { graph, template, enc, embeddings: ChunkedEmbeddingStore::open(&edir)?, params: ParameterStore::open(&pdir)? })
    }

    /// Runs the template over `targets` in batches of `batch_size`, spreading
    /// batches over `parallel` threads, and encodes the union once.
    pub fn extract(&self, targets: &[String], opts: &QueryOptions) -> Result<kgq_core::inference::InferenceSubgraph, PipelineError> {
        let task_predicate = self.enc.task.predicate();
        let batches: Vec<&[String]> = targets.chunks(opts.batch_size.max(1)).collect();
        let run = |b: &&[String]| query_triples(&self.template, b, &self.graph, opts.batch_size, task_predicate);
        let parts: Vec<_> = if opts.parallel > 1 && batches.len() > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.parallel)
                .build()
                .map_err(|e| PipelineError::Data(format!("thread pool: {e}")))?;
            pool.install(|| batches.par_iter().map(run).collect::<Result<_, _>>())?
        } else {
            batches.iter().map(run).collect::<Result<_, _>>()?
        };
        let triples: Vec<(Term, String, Term)> = parts.into_iter().flatten().collect::<BTreeSet<_>>().into_iter().collect();
        Ok(encode_subgraph(&triples, targets, &self.graph, &self.enc)?)
    }

    /// Query-aware path: subgraph extraction, partial embedding load, forward
    /// pass over the subgraph.
    pub fn query(&self, targets: &[String], opts: &QueryOptions) -> Result<(Predictions, QueryTrace), PipelineError> {
        let t = Instant::now();
        let sg = self.extract(targets, opts)?;
        let extract_ms = ms_since(t);
        let t = Instant::now();
        let weights = self.params.load_weights()?;
        let weights_ms = ms_since(t);
        let t = Instant::now();
        let (cm, mut trace) = instantiate(&sg, &self.embeddings, weights)?;
        let instantiate_ms = ms_since(t);
        let t = Instant::now();
        let preds = predict(&cm, &sg, &self.enc, opts.predict, &mut trace)?;
        trace.record("extract", extract_ms);
        trace.record("load-weights", weights_ms);
        trace.record("instantiate", instantiate_ms);
        trace.record("predict", ms_since(t));
        Ok((preds, trace))
    }

    /// Reference path: loads every chunk and every weight, then runs the full
    /// model over the same subgraph in `mode`.
    pub fn query_full(&self, targets: &[String], opts: &QueryOptions, mode: ForwardMode) -> Result<FullRun, PipelineError> {
        let sg = self.extract(targets, opts)?;
        let t = Instant::now();
        let model = disk::load_model(&self.embeddings, &self.params)?;
        let load_ms = ms_since(t);
        let t = Instant::now();
        let (predictions, multiply_adds) = predict_full(&model, &sg, &self.enc, mode)?;
        Ok(FullRun {
            predictions,
            load_ms,
            predict_ms: ms_since(t),
            bytes_loaded: self.embeddings.total_bytes() + self.params.bytes(),
            multiply_adds,
        })
    }

    /// Ground truth from the graph. `None` unless every target has some.
    pub fn metrics(&self, preds: &Predictions, targets: &[String], hits_k: usize) -> Option<Metrics> {
        let (labels, tails) = match &self.enc.task {
            TaskTarget::Classify { label_predicate } => (labels_from_graph(&self.graph, targets, label_predicate), BTreeMap::new()),
            TaskTarget::Link { predicate, .. } => (BTreeMap::new(), tails_from_graph(&self.graph, targets, predicate)),
        };
        evaluate(preds, &labels, &tails, hits_k).ok()
    }
}

/// One JSON object per target.
pub fn predictions_jsonl(preds: &Predictions) -> String {
    let mut out = Vec::new();
    let mut line = |v: serde_json::Result<String>| {
        writeln!(out, "{}", v.expect("predictions serialize")).expect("write to Vec");
    };
    match preds {
        Predictions::Classes(ps) => ps.iter().for_each(|p| line(serde_json::to_string(p))),
        Predictions::Links(ps) => ps.iter().for_each(|p| line(serde_json::to_string(p))),
    }
    String::from_utf8(out).expect("JSON is UTF-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferOutput {
    pub predictions: PathBuf,
    pub trace: PathBuf,
    pub count: usize,
    pub metrics: Option<Metrics>,
}

/// Writes `predictions.jsonl`, `trace.json` and, when ground truth is
/// available for every target, `metrics.json` under the output directory.
pub fn infer(cfg: &TaskConfig, targets_path: &Path, out: Option<&Path>) -> Result<InferOutput, PipelineError> {
    let targets = read_targets(targets_path)?;
    let engine = Engine::open(cfg)?;
    let (preds, trace) = engine.query(&targets, &QueryOptions::from_config(cfg))?;
    let dir = out.map_or_else(|| cfg.out_dir.clone(), Path::to_path_buf);
    let predictions = dir.join("predictions.jsonl");
    let trace_path = dir.join("trace.json");
    write_text(&predictions, &predictions_jsonl(&preds))?;
    disk::write_json(&trace_path, &trace)?;
    let metrics = if preds.is_empty() { None } else { engine.metrics(&preds, &targets, cfg.hits_k) };
    if let Some(m) = &metrics {
        disk::write_json(&dir.join("metrics.json"), m)?;
    }
    Ok(InferOutput { predictions, trace: trace_path, count: preds.len(), metrics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub path: String,
    pub load_ms: f64,
    pub forward_ms: f64,
    pub total_ms: f64,
    pub bytes_loaded: u64,
    pub model_bytes: u64,
    pub multiply_adds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Fraction of embedding chunks the partial path loaded.
    pub chunk_fraction: f64,
    pub byte_fraction: f64,
    pub predictions_agree: bool,
    pub max_score_diff: f64,
}

impl BenchReport {
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>10} {:>10} {:>10} {:>14} {:>14} {:>14}\n",
            "path", "load_ms", "fwd_ms", "total_ms", "bytes", "model_bytes", "mult_adds"
        );
        for r in &self.rows {
            s += &format!(
                "{:<8} {:>10.3} {:>10.3} {:>10.3} {:>14} {:>14} {:>14}\n",
                r.path, r.load_ms, r.forward_ms, r.total_ms, r.bytes_loaded, r.model_bytes, r.multiply_adds
            );
        }
        s += &format!(
            "chunks loaded {:.2}%, bytes loaded {:.2}%, predictions agree: {} (max |diff| {:.2e})\n",
            self.chunk_fraction * 100.0,
            self.byte_fraction * 100.0,
            self.predictions_agree,
            self.max_score_diff
        );
        s
    }
}

/// Largest score difference, or `None` when the predicted labels or rankings differ.
pub fn compare_predictions(a: &Predictions, b: &Predictions) -> Option<f64> {
    let max_diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    match (a, b) {
        (Predictions::Classes(a), Predictions::Classes(b)) if a.len() == b.len() => a.iter().zip(b).try_fold(0.0, |m, (x, y)| {
            (x.target == y.target && x.class == y.class && x.scores.len() == y.scores.len())
                .then(|| f64::max(m, max_diff(&x.scores, &y.scores)))
        }),
        (Predictions::Links(a), Predictions::Links(b)) if a.len() == b.len() => a.iter().zip(b).try_fold(0.0, |m, (x, y)| {
            let same = x.target == y.target && x.ranked.len() == y.ranked.len() && x.ranked.iter().zip(&y.ranked).all(|(u, v)| u.0 == v.0);
            let xs: Vec<f64> = x.ranked.iter().map(|r| r.1).collect();
            let ys: Vec<f64> = y.ranked.iter().map(|r| r.1).collect();
            same.then(|| f64::max(m, max_diff(&xs, &ys)))
        }),
        _ => None,
    }
}

/// Runs both paths over the same targets.
pub fn bench_engine(engine: &Engine, targets: &[String], opts: &QueryOptions) -> Result<BenchReport, PipelineError> {
    let (preds, trace) = engine.query(targets, opts)?;
    let mode = trace.mode.unwrap_or(ForwardMode::Sparse);
    let full = engine.query_full(targets, opts, mode)?;
    let model_bytes = engine.embeddings.total_bytes() + engine.params.bytes();
    let stage = |name: &str| trace.stage_ms.iter().filter(|s| s.stage == name).map(|s| s.ms).sum::<f64>();
    let partial_load = stage("load-weights") + stage("instantiate");
    let partial = BenchRow {
        path: "partial".into(),
        load_ms: partial_load,
        forward_ms: stage("predict"),
        total_ms: partial_load + stage("predict"),
        bytes_loaded: trace.bytes_loaded + trace.weight_bytes,
        model_bytes,
        multiply_adds: trace.multiply_adds,
    };
    let full_row = BenchRow {
        path: "full".into(),
        load_ms: full.load_ms,
        forward_ms: full.predict_ms,
        total_ms: full.load_ms + full.predict_ms,
        bytes_loaded: full.bytes_loaded,
        model_bytes,
        multiply_adds: full.multiply_adds,
    };
    let diff = compare_predictions(&preds, &full.predictions);
    let chunk_fraction = if trace.chunks_total == 0 { 0.0 } else { trace.chunks_loaded as f64 / trace.chunks_total as f64 };
    Ok(BenchReport {
        byte_fraction: partial.bytes_loaded as f64 / model_bytes.max(1) as f64,
        rows: vec![partial, full_row],
        chunk_fraction,
        predictions_agree: diff.is_some_and(|d| d <= 1e-5),
        max_score_diff: diff.unwrap_or(f64::INFINITY),
    })
}

pub fn bench(cfg: &TaskConfig, targets_path: &Path) -> Result<BenchReport, PipelineError> {
    let targets = read_targets(targets_path)?;
    let engine = Engine::open(cfg)?;
    let report = bench_engine(&engine, &targets, &QueryOptions::from_config(cfg))?;
    disk::write_json(&cfg.out_dir.join("bench.json"), &report)?;
    Ok(report)
}
