//! Seeded synthetic bibliographic knowledge graphs.
//!
//! Five node types (`Paper`, `Author`, `Venue`, `Topic`, `Org`) and eight
//! predicates. A paper's venue follows its main topic most of the time, so
//! venue classification is learnable from topic and author neighbourhoods.

use std::fs;
use std::path::Path;

use kgq_core::term::RDF_TYPE;
use kgq_core::{LiteralKind, Term, Triple, TripleGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::disk::DiskError;

pub const NS: &str = "http://example.org/kg#";

pub fn ex(local: &str) -> String {
    format!("{NS}{local}")
}

/// Template over the synthetic schema: four 1-hop branches from the paper and
/// two 2-hop branches through its authors.
pub const TEMPLATE: &str = "PREFIX ex: <http://example.org/kg#>
SELECT ?s ?p ?o
WHERE {
{ SELECT ?s ?p ?o WHERE { ?s a ex:Paper. ?s ex:authoredBy ?o. BIND( \"ex:authoredBy\" AS ?p). VALUES ?s {<VT-List>}. }}
UNION
{ SELECT ?s ?p ?o WHERE { ?s a ex:Paper. ?s ex:hasTopic ?o. BIND( \"ex:hasTopic\" AS ?p). VALUES ?s {<VT-List>}. }}
UNION
{ SELECT ?s ?p ?o WHERE { ?s a ex:Paper. ?s ex:title ?o. BIND( \"ex:title\" AS ?p). VALUES ?s {<VT-List>}. }}
UNION
{ SELECT ?s ?p ?o WHERE { ?s a ex:Paper. ?s ex:year ?o. BIND( \"ex:year\" AS ?p). VALUES ?s {<VT-List>}. }}
UNION
{ SELECT ?a ?p ?o WHERE { ?s a ex:Paper. ?s ex:authoredBy ?a. ?a ex:affiliatedWith ?o. BIND( \"ex:affiliatedWith\" AS ?p). VALUES ?s {<VT-List>}. }}
UNION
{ SELECT ?a ?p ?o WHERE { ?s a ex:Paper. ?s ex:authoredBy ?a. ?a ex:interest ?o. BIND( \"ex:interest\" AS ?p). VALUES ?s {<VT-List>}. }}
}
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub papers: usize,
    pub authors: usize,
    pub venues: usize,
    pub topics: usize,
    pub orgs: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Proportions used throughout the tests: one author per two papers.
    pub fn with_papers(papers: usize, seed: u64) -> Self {
        SynthConfig { papers, authors: (papers / 2).max(4), venues: 4, topics: 8, orgs: 5, seed }
    }

    pub fn node_count(&self) -> usize {
        self.papers + self.authors + self.venues + self.topics + self.orgs
    }
}

fn typed(ts: &mut Vec<Triple>, node: &str, ty: &str) {
    ts.push(Triple::new(Term::iri(ex(node)), Term::iri(RDF_TYPE), Term::iri(ex(ty))).expect("valid triple"));
}

fn edge(ts: &mut Vec<Triple>, s: &str, p: &str, o: Term) {
    ts.push(Triple::new(Term::iri(ex(s)), Term::iri(ex(p)), o).expect("valid triple"));
}

pub fn paper_iri(i: usize) -> String {
    ex(&format!("paper{i}"))
}

pub fn synth_triples(c: &SynthConfig) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut ts = Vec::new();
    for v in 0..c.venues {
        typed(&mut ts, &format!("venue{v}"), "Venue");
    }
    for t in 0..c.topics {
        typed(&mut ts, &format!("topic{t}"), "Topic");
    }
    for o in 0..c.orgs {
        typed(&mut ts, &format!("org{o}"), "Org");
    }
    for a in 0..c.authors {
        let name = format!("author{a}");
        typed(&mut ts, &name, "Author");
        edge(&mut ts, &name, "name", Term::string(format!("Author {a}")));
        edge(&mut ts, &name, "affiliatedWith", Term::iri(ex(&format!("org{}", rng.gen_range(0..c.orgs)))));
        edge(&mut ts, &name, "interest", Term::iri(ex(&format!("topic{}", a % c.topics))));
    }
    for i in 0..c.papers {
        let p = format!("paper{i}");
        typed(&mut ts, &p, "Paper");
        let topic = rng.gen_range(0..c.topics);
        edge(&mut ts, &p, "hasTopic", Term::iri(ex(&format!("topic{topic}"))));
        if rng.gen_bool(0.3) {
            edge(&mut ts, &p, "hasTopic", Term::iri(ex(&format!("topic{}", rng.gen_range(0..c.topics)))));
        }
        for _ in 0..rng.gen_range(1..=3) {
            edge(&mut ts, &p, "authoredBy", Term::iri(ex(&format!("author{}", rng.gen_range(0..c.authors)))));
        }
        edge(&mut ts, &p, "title", Term::string(format!("Title {}", rng.gen_range(0..c.papers.max(1) * 4))));
        edge(&mut ts, &p, "year", Term::Literal {
            value: (2000 + rng.gen_range(0..20)).to_string(),
            kind: LiteralKind::Year,
        });
        let venue = if rng.gen_bool(0.85) { topic % c.venues } else { rng.gen_range(0..c.venues) };
        edge(&mut ts, &p, "publishedIn", Term::iri(ex(&format!("venue{venue}"))));
    }
    ts
}

pub fn synth_graph(c: &SynthConfig) -> TripleGraph {
    TripleGraph::from_triples(synth_triples(c))
}

/// `nodes` extra authors, organisations and topics linked only among
/// themselves. No paper reaches them, so no template rooted at papers does.
pub fn unreachable_noise(nodes: usize, seed: u64) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = (nodes / 3).max(1);
    let mut ts = Vec::new();
    for i in 0..per {
        typed(&mut ts, &format!("xorg{i}"), "Org");
        typed(&mut ts, &format!("xtopic{i}"), "Topic");
    }
    for i in 0..nodes.saturating_sub(2 * per).max(1) {
        let a = format!("xauthor{i}");
        typed(&mut ts, &a, "Author");
        edge(&mut ts, &a, "name", Term::string(format!("Noise {i}")));
        edge(&mut ts, &a, "affiliatedWith", Term::iri(ex(&format!("xorg{}", rng.gen_range(0..per)))));
        edge(&mut ts, &a, "interest", Term::iri(ex(&format!("xtopic{}", rng.gen_range(0..per)))));
    }
    ts
}

/// Tab-separated rendering accepted by `kgq ingest`.
pub fn to_tsv(ts: &[Triple]) -> String {
    TripleGraph::from_triples(ts.iter().cloned()).to_tsv()
}

/// Writes a ready-to-run task under `dir`: `kg.tsv`, `template.rq`,
/// `train_targets.txt` (the first 80% of papers), `query_targets.txt` (the
/// rest) and `task.json`.
pub fn write_workspace(dir: &Path, c: &SynthConfig) -> Result<(), DiskError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DiskError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let put = |name: &str, text: String| fs::write(dir.join(name), text).map_err(io(&dir.join(name)));
    put("kg.tsv", to_tsv(&synth_triples(c)))?;
    put("template.rq", TEMPLATE.to_string())?;
    let split = c.papers * 4 / 5;
    let lines = |r: std::ops::Range<usize>| r.map(|i| paper_iri(i) + "\n").collect::<String>();
    put("train_targets.txt", lines(0..split))?;
    put("query_targets.txt", lines(split..c.papers))?;
    let task = json!({
        "task": "paper-venue",
        "kind": "node-classification",
        "kg_name": "synthetic bibliography",
        "instruction": "predict the venue of a paper",
        "target_type": "ex:Paper",
        "predicate": "ex:publishedIn",
        "graph": "kg.tsv",
        "schema_stats": "schema_stats.tsv",
        "template": "template.rq",
        "train_targets": "train_targets.txt",
        "store_root": "stores",
        "out_dir": "out",
        "seed": c.seed,
        "epochs": 80,
        "hidden_dim": 16,
        "chunk_rows": 32,
    });
    crate::disk::write_json(&dir.join("task.json"), &task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgq_core::sparql::parse_query;

    #[test]
    fn same_seed_same_graph() {
        let c = SynthConfig::with_papers(30, 4);
        assert_eq!(synth_triples(&c), synth_triples(&c));
        let g = synth_graph(&c);
        assert_eq!(g.node_types().len(), 5);
        let preds: std::collections::BTreeSet<_> = g.triples().map(|t| t.predicate.text().to_string()).collect();
        assert_eq!(preds.len(), 9, "eight predicates plus rdf:type");
    }

    #[test]
    fn template_parses() {
        let q = parse_query(TEMPLATE).unwrap();
        assert_eq!(q.branches.len(), 6);
        assert!(q.has_placeholder());
    }
}
