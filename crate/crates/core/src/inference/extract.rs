use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::encode::{labels_from_graph, tails_from_graph, type_key, EncodingMaps, TaskTarget, LITERAL_NODE_TYPE};
use super::InferenceError;
use crate::graph::TripleGraph;
use crate::rgcn::{node_seed, train, Edge, EncodedGraph, NodeInput, TrainHyper, TrainProblem, TrainReport, TrainTask};
use crate::sparql::{execute_batched, IriRef, Projection, ProjectionExpr, QueryAst};
use crate::term::Term;

/// Layer-0 source of a subgraph node, in training-time terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeRef {
    /// Stored embedding row of a node type.
    Row { node_type: String, row: usize },
    /// Deterministic vector seeded by the node's text: targets, other nodes of
    /// the featureless target type, and nodes unseen at training.
    Seeded { key: String },
    /// Literal leaf.
    Zero,
}

/// Encoded subgraph of one query. Local node `i` is `nodes[i]`; targets come
/// first, in request order.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSubgraph {
    pub graph: EncodedGraph,
    pub nodes: Vec<Term>,
    /// Type name of each local type id used in `graph`.
    pub type_names: Vec<String>,
    pub refs: Vec<NodeRef>,
    /// Local indices of the targets (always `0..target_iris.len()`).
    pub targets: Vec<usize>,
    pub target_iris: Vec<String>,
    /// Targets with no training-time encoding.
    pub cold_targets: Vec<String>,
    /// Non-target, non-literal nodes with no training-time encoding.
    pub cold_nodes: usize,
    /// Embedding rows needed per type.
    pub rows_by_type: BTreeMap<String, BTreeSet<usize>>,
    /// Distinct `(s, p, o)` rows returned by the template.
    pub triples: usize,
}

impl InferenceSubgraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn local_index(&self, term: &Term) -> Option<usize> {
        self.nodes.iter().position(|n| n == term)
    }

    /// Local indices of nodes of type `ty`, in local order.
    pub fn nodes_of_type(&self, ty: &str) -> Vec<usize> {
        let Some(t) = self.type_names.iter().position(|n| n == ty) else {
            return Vec::new();
        };
        (0..self.num_nodes()).filter(|&i| self.graph.node_type_of(i) == t).collect()
    }
}

fn dedup_targets(targets: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    targets.iter().filter(|t| seen.insert(t.as_str())).cloned().collect()
}

fn is_task_predicate(template: &QueryAst, p: &str, task_predicate: &str) -> bool {
    p == task_predicate || template.prefixes.expand(p) == template.prefixes.expand(task_predicate)
}

/// Runs the template over `targets` and returns the distinct `(s, p, o)` rows,
/// minus rows of the task predicate. `p` is the text of the relation column.
pub fn query_triples(
    template: &QueryAst,
    targets: &[String],
    g: &TripleGraph,
    batch_size: usize,
    task_predicate: &str,
) -> Result<Vec<(Term, String, Term)>, InferenceError> {
    let outputs = template.output_vars();
    let [s, p, o] = outputs.as_slice() else {
        return Err(InferenceError::Template(alloc::format!(
            "template must select three columns (subject, relation, object), found {}",
            outputs.len()
        )));
    };
    let iris: Vec<IriRef> = dedup_targets(targets).into_iter().map(IriRef::full).collect();
    let mut out = BTreeSet::new();
    for b in execute_batched(g, template, &iris, batch_size)? {
        let (Some(st), Some(pt), Some(ot)) = (b.get(s), b.get(p), b.get(o)) else {
            continue;
        };
        if st.is_literal() || is_task_predicate(template, pt.text(), task_predicate) {
            continue;
        }
        out.insert((st.clone(), pt.text().to_string(), ot.clone()));
    }
    Ok(out.into_iter().collect())
}

/// Relation names a template can emit without running it: literal values
/// that feed its relation column.
fn static_relations(template: &QueryAst) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for b in &template.branches {
        let items = b.projection.as_deref().unwrap_or(&template.projection);
        match items.get(1) {
            Some(Projection::Alias { expr: ProjectionExpr::Literal(l), .. }) => {
                out.insert(l.clone());
            }
            Some(item) => {
                if let Some(v) = item.source_var() {
                    out.extend(b.binds.iter().filter(|x| x.var == v).map(|x| x.value.clone()));
                }
            }
            None => {}
        }
    }
    out
}

/// Encodes template rows into a subgraph.
pub fn encode_subgraph(
    triples: &[(Term, String, Term)],
    targets: &[String],
    g: &TripleGraph,
    enc: &EncodingMaps,
) -> Result<InferenceSubgraph, InferenceError> {
    let target_iris = dedup_targets(targets);
    let mut nodes: Vec<Term> = target_iris.iter().map(|t| Term::iri(t.clone())).collect();
    let mut local: BTreeMap<Term, usize> = nodes.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    let rest: BTreeSet<&Term> = triples.iter().flat_map(|(s, _, o)| [s, o]).filter(|t| !local.contains_key(*t)).collect();
    for t in rest {
        local.insert(t.clone(), nodes.len());
        nodes.push(t.clone());
    }

    let mut refs = Vec::with_capacity(nodes.len());
    let mut node_type_names = Vec::with_capacity(nodes.len());
    let mut cold_targets = Vec::new();
    let mut cold_nodes = 0;
    let mut rows_by_type: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        let ty = if n.is_literal() {
            LITERAL_NODE_TYPE.to_string()
        } else if i < target_iris.len() {
            enc.target_type.clone()
        } else {
            g.lookup(n).map_or_else(|| crate::schema::UNTYPED.to_string(), |id| type_key(g, id))
        };
        let r = if n.is_literal() {
            NodeRef::Zero
        } else if i < target_iris.len() || ty == enc.target_type {
            if enc.row(&enc.target_type, n.text()).is_none() {
                if i < target_iris.len() {
                    cold_targets.push(n.text().to_string());
                } else {
                    cold_nodes += 1;
                }
            }
            NodeRef::Seeded { key: n.text().to_string() }
        } else if let Some(row) = enc.row(&ty, n.text()) {
            rows_by_type.entry(ty.clone()).or_default().insert(row);
            NodeRef::Row { node_type: ty.clone(), row }
        } else {
            cold_nodes += 1;
            NodeRef::Seeded { key: n.text().to_string() }
        };
        refs.push(r);
        node_type_names.push(ty);
    }

    let type_names: Vec<String> = node_type_names.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let node_type = node_type_names
        .iter()
        .map(|t| type_names.binary_search(t).expect("collected from the same list"))
        .collect();

    let r_count = enc.relations.len();
    let mut edges = Vec::with_capacity(2 * triples.len());
    for (s, p, o) in triples {
        let r = enc.relation_id(p).ok_or_else(|| InferenceError::UnknownRelation(p.clone()))?;
        let (si, oi) = (local[s], local[o]);
        edges.push(Edge::new(si, r, oi));
        edges.push(Edge::new(oi, r + r_count, si));
    }
    let graph = EncodedGraph::new(nodes.len(), enc.relation_count(), edges, node_type)?;
    Ok(InferenceSubgraph {
        graph,
        nodes,
        type_names,
        refs,
        targets: (0..target_iris.len()).collect(),
        target_iris,
        cold_targets,
        cold_nodes,
        rows_by_type,
        triples: triples.len(),
    })
}

/// Instantiates `template` with `targets`, executes it in batches and encodes
/// the result. Unknown targets are kept as cold nodes; unknown relations are
/// an error.
pub fn extract_subgraph(
    template: &QueryAst,
    targets: &[String],
    g: &TripleGraph,
    enc: &EncodingMaps,
    batch_size: usize,
) -> Result<InferenceSubgraph, InferenceError> {
    let triples = query_triples(template, targets, g, batch_size, enc.task.predicate())?;
    encode_subgraph(&triples, targets, g, enc)
}

/// Maps node references to trainer inputs. Table order is [`EncodingMaps::tables`].
pub fn node_inputs(refs: &[NodeRef], enc: &EncodingMaps, seed: u64) -> Result<Vec<NodeInput>, InferenceError> {
    let tables = enc.tables();
    refs.iter()
        .map(|r| match r {
            NodeRef::Row { node_type, row } => tables
                .iter()
                .position(|(t, _)| t == node_type)
                .map(|table| NodeInput::Row { table, row: *row })
                .ok_or_else(|| InferenceError::Encoding(alloc::format!("no embedding table for type {node_type}"))),
            NodeRef::Seeded { key } => Ok(NodeInput::Seeded(node_seed(seed, key))),
            NodeRef::Zero => Ok(NodeInput::Zero),
        })
        .collect()
}

/// Encodings, training subgraph and supervision for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub enc: EncodingMaps,
    pub sg: InferenceSubgraph,
    pub task: TrainTask,
}

impl TrainingSet {
    pub fn train(&self, hyper: &TrainHyper) -> Result<TrainReport, InferenceError> {
        let inputs = node_inputs(&self.sg.refs, &self.enc, hyper.seed)?;
        let tables = self.enc.tables();
        let relations = self.enc.relation_names();
        let problem = TrainProblem { graph: &self.sg.graph, inputs: &inputs, tables: &tables, relations: &relations, task: &self.task };
        Ok(train(&problem, hyper)?)
    }
}

/// Builds the encodings from `g` and the template's output over the training
/// targets, and derives labels or positive links from the task predicate.
pub fn prepare_training(
    template: &QueryAst,
    g: &TripleGraph,
    targets: &[String],
    target_type: &str,
    task: TaskTarget,
    batch_size: usize,
) -> Result<TrainingSet, InferenceError> {
    let triples = query_triples(template, targets, g, batch_size, task.predicate())?;
    let mut relations = static_relations(template);
    relations.extend(triples.iter().map(|(_, p, _)| p.clone()));
    relations.retain(|p| !is_task_predicate(template, p, task.predicate()));
    let targets = dedup_targets(targets);
    let labels = match &task {
        TaskTarget::Classify { label_predicate } => labels_from_graph(g, &targets, label_predicate),
        TaskTarget::Link { .. } => BTreeMap::new(),
    };
    let enc = EncodingMaps::build(g, target_type, task.clone(), relations, labels.values().cloned());
    let sg = encode_subgraph(&triples, &targets, g, &enc)?;
    let train_task = match &task {
        TaskTarget::Classify { .. } => {
            let labels: Vec<(usize, usize)> = sg
                .target_iris
                .iter()
                .enumerate()
                .filter_map(|(i, t)| Some((sg.targets[i], enc.label_id(labels.get(t)?)?)))
                .collect();
            if labels.is_empty() {
                return Err(InferenceError::Encoding("no training target has a label".into()));
            }
            TrainTask::NodeClassification { labels, num_classes: enc.labels.len() }
        }
        TaskTarget::Link { predicate, tail_type } => {
            let r = enc.relation_id(predicate).expect("link predicate is always encoded");
            let tails = tails_from_graph(g, &targets, predicate);
            let positives: Vec<Edge> = sg
                .target_iris
                .iter()
                .enumerate()
                .flat_map(|(i, t)| tails.get(t).into_iter().flatten().map(move |tail| (i, tail)))
                .filter_map(|(i, tail)| Some(Edge::new(sg.targets[i], r, sg.local_index(&Term::iri(tail.clone()))?)))
                .collect();
            if positives.is_empty() {
                return Err(InferenceError::Encoding(
                    "no positive link of a training target reaches a subgraph node".into(),
                ));
            }
            TrainTask::LinkPrediction { positives, candidates: sg.nodes_of_type(tail_type) }
        }
    };
    Ok(TrainingSet { enc, sg, task: train_task })
}
