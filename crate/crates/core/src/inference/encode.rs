use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::graph::{NodeType, TermId, TripleGraph};
use crate::schema::UNTYPED;
use crate::term::Term;

/// Node type used for literal objects. Literal nodes have no embedding and
/// enter the first layer as zero vectors.
pub const LITERAL_NODE_TYPE: &str = "literal";

/// Prefix marking the reverse direction of a relation.
pub const INVERSE_PREFIX: &str = "^";

/// What the task predicts. The task predicate itself never carries messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskTarget {
    /// Label of a target = object of `label_predicate`.
    Classify { label_predicate: String },
    /// Rank tails of `tail_type` for `(target, predicate, ?)`.
    Link { predicate: String, tail_type: String },
}

impl TaskTarget {
    pub fn predicate(&self) -> &str {
        match self {
            TaskTarget::Classify { label_predicate } => label_predicate,
            TaskTarget::Link { predicate, .. } => predicate,
        }
    }
}

/// Training-time identifiers, frozen after training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingMaps {
    pub target_type: String,
    pub task: TaskTarget,
    /// Per node type, node text to row index (dense, sorted by text).
    pub node_enc: BTreeMap<String, BTreeMap<String, usize>>,
    /// Forward relation names; relation `r` has inverse id `r + relations.len()`.
    pub relations: Vec<String>,
    /// Class names for node classification, by class id.
    pub labels: Vec<String>,
}

/// Type bucket of a graph node.
pub fn type_key(g: &TripleGraph, id: TermId) -> String {
    if g.term(id).is_literal() {
        return LITERAL_NODE_TYPE.to_string();
    }
    match g.type_of(id) {
        NodeType::Typed(t) => g.term(t).text().to_string(),
        NodeType::Untyped => UNTYPED.to_string(),
    }
}

impl EncodingMaps {
    /// Encodes every non-literal node that occurs as subject or object of a
    /// non-type triple, grouped by type and sorted by text within a type.
    pub fn build(
        g: &TripleGraph,
        target_type: &str,
        task: TaskTarget,
        relations: impl IntoIterator<Item = String>,
        labels: impl IntoIterator<Item = String>,
    ) -> Self {
        let rdf_type = g.rdf_type_id();
        let mut nodes: BTreeSet<TermId> = BTreeSet::new();
        for &[s, p, o] in g.triple_ids() {
            if Some(p) == rdf_type {
                nodes.insert(s);
                continue;
            }
            nodes.insert(s);
            if !g.term(o).is_literal() {
                nodes.insert(o);
            }
        }
        let mut by_type: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
        for id in nodes {
            by_type.entry(type_key(g, id)).or_default().insert(g.term(id).text());
        }
        let node_enc = by_type
            .into_iter()
            .map(|(ty, names)| (ty, names.into_iter().enumerate().map(|(i, n)| (n.to_string(), i)).collect()))
            .collect();
        let mut relations: Vec<String> = relations.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if let TaskTarget::Link { predicate, .. } = &task {
            if !relations.contains(predicate) {
                relations.push(predicate.clone());
                relations.sort();
            }
        }
        let labels = labels.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        EncodingMaps { target_type: target_type.to_string(), task, node_enc, relations, labels }
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.binary_search_by(|r| r.as_str().cmp(name)).ok()
    }

    /// Forward names followed by their inverses; index = relation id.
    pub fn relation_names(&self) -> Vec<String> {
        let mut out = self.relations.clone();
        out.extend(self.relations.iter().map(|r| alloc::format!("{INVERSE_PREFIX}{r}")));
        out
    }

    pub fn relation_count(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn row(&self, node_type: &str, name: &str) -> Option<usize> {
        self.node_enc.get(node_type)?.get(name).copied()
    }

    /// Types that own an embedding table, in table order, with row counts.
    /// The target type and literals are featureless.
    pub fn tables(&self) -> Vec<(String, usize)> {
        self.node_enc
            .iter()
            .filter(|(ty, _)| **ty != self.target_type && *ty != LITERAL_NODE_TYPE)
            .map(|(ty, m)| (ty.clone(), m.len()))
            .collect()
    }

    /// Checks that `node_enc` rows are dense and labels/relations are sorted and unique.
    pub fn validate(&self) -> Result<(), InferenceError> {
        for (ty, m) in &self.node_enc {
            let rows: BTreeSet<usize> = m.values().copied().collect();
            if rows.len() != m.len() || rows.last().is_some_and(|&r| r + 1 != m.len()) {
                return Err(InferenceError::Encoding(alloc::format!("rows of type {ty} are not a bijection onto 0..{}", m.len())));
            }
        }
        let sorted_unique = |v: &[String]| v.windows(2).all(|w| w[0] < w[1]);
        if !sorted_unique(&self.relations) || !sorted_unique(&self.labels) {
            return Err(InferenceError::Encoding("relation or label encodings are not sorted and unique".into()));
        }
        Ok(())
    }
}

/// Label of each target: the smallest object of the label predicate, if any.
pub fn labels_from_graph(g: &TripleGraph, targets: &[String], label_predicate: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for t in targets {
        let objs = g.neighbors(&Term::iri(t.clone()), label_predicate, crate::graph::Direction::Out);
        if let Some(&o) = objs.iter().min_by(|a, b| g.term(**a).cmp(g.term(**b))) {
            out.insert(t.clone(), g.term(o).text().to_string());
        }
    }
    out
}

/// True tails of each target under the link predicate.
pub fn tails_from_graph(g: &TripleGraph, targets: &[String], predicate: &str) -> BTreeMap<String, Vec<String>> {
    let mut out = BTreeMap::new();
    for t in targets {
        let mut tails: Vec<String> = g
            .neighbors(&Term::iri(t.clone()), predicate, crate::graph::Direction::Out)
            .into_iter()
            .map(|o| g.term(o).text().to_string())
            .collect();
        tails.sort();
        if !tails.is_empty() {
            out.insert(t.clone(), tails);
        }
    }
    out
}
