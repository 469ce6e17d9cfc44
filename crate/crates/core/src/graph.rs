//! In-memory triple store with predicate, subject, object and
//! (subject-type, predicate) indices.
//!
//! Terms are interned in sorted order at construction, so two graphs built
//! from the same set of triples are structurally identical regardless of input
//! order or duplication.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use thiserror::Error;

use crate::term::{parse_field, parse_quoted, Term, Triple, RDF_TYPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermId(pub u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Type of a node, with untyped nodes grouped under one reserved bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeType {
    Typed(TermId),
    Untyped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleFormat {
    NTriples,
    Tsv,
}

impl TripleFormat {
    pub fn from_tag(tag: &str) -> Result<Self, IngestError> {
        match tag.to_ascii_lowercase().as_str() {
            "nt" | "ntriples" | "n-triples" => Ok(TripleFormat::NTriples),
            "tsv" => Ok(TripleFormat::Tsv),
            _ => Err(IngestError::UnknownFormat(tag.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown triple format '{0}' (expected 'tsv' or 'ntriples')")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleGraph {
    terms: Vec<Term>,
    ids: BTreeMap<Term, TermId>,
    triples: Vec<[TermId; 3]>,
    by_predicate: BTreeMap<TermId, Vec<u32>>,
    by_subject: BTreeMap<TermId, Vec<u32>>,
    by_object: BTreeMap<TermId, Vec<u32>>,
    by_subject_type_predicate: BTreeMap<(NodeType, TermId), Vec<u32>>,
    node_type: BTreeMap<TermId, TermId>,
    rdf_type: Option<TermId>,
}

impl TripleGraph {
    /// Parses `source` in the given format and builds the indexed graph.
    pub fn ingest(source: &str, format: TripleFormat) -> Result<Self, IngestError> {
        let mut triples = Vec::new();
        for (n, raw) in source.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let parsed = match format {
                TripleFormat::Tsv => parse_tsv_line(line),
                TripleFormat::NTriples => parse_nt_line(line),
            };
            let t = parsed.map_err(|message| IngestError::Parse { line: n + 1, message })?;
            triples.push(t);
        }
        Ok(Self::from_triples(triples))
    }

    /// Builds the graph from already-validated triples. Duplicates collapse.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let unique: BTreeSet<Triple> = triples.into_iter().collect();
        let mut vocab = BTreeSet::new();
        for t in &unique {
            vocab.insert(t.subject.clone());
            vocab.insert(t.predicate.clone());
            vocab.insert(t.object.clone());
        }
        let terms: Vec<Term> = vocab.into_iter().collect();
        let ids: BTreeMap<Term, TermId> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), TermId(i as u32)))
            .collect();
        // Term order is preserved by the id assignment, so the set order is the id order.
        let triples: Vec<[TermId; 3]> = unique
            .iter()
            .map(|t| [ids[&t.subject], ids[&t.predicate], ids[&t.object]])
            .collect();
        let rdf_type = ids.get(&Term::iri(RDF_TYPE)).copied();

        let mut g = TripleGraph { terms, ids, triples, rdf_type, ..Default::default() };
        for (i, &[s, p, o]) in g.triples.iter().enumerate() {
            let i = i as u32;
            g.by_predicate.entry(p).or_default().push(i);
            g.by_subject.entry(s).or_default().push(i);
            g.by_object.entry(o).or_default().push(i);
            if Some(p) == rdf_type && !g.node_type.contains_key(&s) {
                // Several type assertions: the smallest type term wins.
                g.node_type.insert(s, o);
            }
        }
        for (i, &[s, p, _]) in g.triples.iter().enumerate() {
            if Some(p) == rdf_type {
                continue;
            }
            let ty = g.type_of(s);
            g.by_subject_type_predicate.entry((ty, p)).or_default().push(i as u32);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id.index()]
    }

    pub fn lookup(&self, term: &Term) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn lookup_iri(&self, iri: &str) -> Option<TermId> {
        // Avoid allocating a Term for the common miss path on long IRIs.
        self.ids.get(&Term::Iri(iri.to_string())).copied()
    }

    pub fn rdf_type_id(&self) -> Option<TermId> {
        self.rdf_type
    }

    pub fn triple_ids(&self) -> &[[TermId; 3]] {
        &self.triples
    }

    /// All triples in canonical (sorted) order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples.iter().map(|&[s, p, o]| Triple {
            subject: self.term(s).clone(),
            predicate: self.term(p).clone(),
            object: self.term(o).clone(),
        })
    }

    pub fn type_of(&self, node: TermId) -> NodeType {
        self.node_type
            .get(&node)
            .map_or(NodeType::Untyped, |&t| NodeType::Typed(t))
    }

    /// Number of nodes with a type assertion.
    pub fn typed_node_count(&self) -> usize {
        self.node_type.len()
    }

    /// Distinct type terms, sorted.
    pub fn node_types(&self) -> BTreeSet<TermId> {
        self.node_type.values().copied().collect()
    }

    /// Nodes asserted to have type `ty`, in id order.
    pub fn nodes_of_type(&self, ty: TermId) -> Vec<TermId> {
        self.node_type
            .iter()
            .filter(|(_, &t)| t == ty)
            .map(|(&n, _)| n)
            .collect()
    }

    /// Triples whose subject has type `ty` and predicate `p`.
    pub fn by_subject_type_predicate(&self, ty: NodeType, p: TermId) -> impl Iterator<Item = [TermId; 3]> + '_ {
        self.by_subject_type_predicate
            .get(&(ty, p))
            .into_iter()
            .flatten()
            .map(|&i| self.triples[i as usize])
    }

    /// Triples matching the bound positions; unbound positions match anything.
    pub fn matching(
        &self,
        s: Option<TermId>,
        p: Option<TermId>,
        o: Option<TermId>,
    ) -> impl Iterator<Item = [TermId; 3]> + '_ {
        let candidates: Option<&[u32]> = if let Some(s) = s {
            Some(self.by_subject.get(&s).map_or(&[][..], Vec::as_slice))
        } else if let Some(o) = o {
            Some(self.by_object.get(&o).map_or(&[][..], Vec::as_slice))
        } else if let Some(p) = p {
            Some(self.by_predicate.get(&p).map_or(&[][..], Vec::as_slice))
        } else {
            None
        };
        let indexed = candidates.map(|c| c.iter().map(|&i| self.triples[i as usize]));
        let full = match candidates {
            None => Some(self.triples.iter().copied()),
            Some(_) => None,
        };
        indexed
            .into_iter()
            .flatten()
            .chain(full.into_iter().flatten())
            .filter(move |t| {
                s.is_none_or(|x| t[0] == x) && p.is_none_or(|x| t[1] == x) && o.is_none_or(|x| t[2] == x)
            })
    }

    /// Neighbors of `node` under `relation`. Unknown nodes or relations yield the empty set.
    pub fn neighbors(&self, node: &Term, relation: &str, direction: Direction) -> BTreeSet<TermId> {
        let (Some(n), Some(r)) = (self.lookup(node), self.lookup_iri(crate::term::canonical_predicate(relation))) else {
            return BTreeSet::new();
        };
        match direction {
            Direction::Out => self.matching(Some(n), Some(r), None).map(|t| t[2]).collect(),
            Direction::In => self.matching(None, Some(r), Some(n)).map(|t| t[0]).collect(),
        }
    }

    /// Canonical TSV rendering; ingesting it yields an identical graph.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for &[s, p, o] in &self.triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.term(s).to_tsv_field(),
                self.term(p).to_tsv_field(),
                self.term(o).to_tsv_field()
            );
        }
        out
    }
}

fn parse_tsv_line(line: &str) -> Result<Triple, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(alloc::format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    let s = parse_field(fields[0])?;
    let p = parse_field(fields[1])?;
    let o = parse_field(fields[2])?;
    Triple::new(s, p, o)
}

fn parse_nt_line(line: &str) -> Result<Triple, String> {
    let mut rest = line.trim();
    let mut terms = Vec::with_capacity(3);
    for _ in 0..3 {
        rest = rest.trim_start();
        let (term, used) = next_nt_term(rest)?;
        terms.push(term);
        rest = &rest[used..];
    }
    let rest = rest.trim();
    if rest != "." {
        return Err(alloc::format!("expected '.' terminator, found '{rest}'"));
    }
    let o = terms.pop().unwrap();
    let p = terms.pop().unwrap();
    let s = terms.pop().unwrap();
    Triple::new(s, p, o)
}

fn next_nt_term(s: &str) -> Result<(Term, usize), String> {
    if s.starts_with('<') {
        let close = s.find('>').ok_or_else(|| "unterminated IRI".to_string())?;
        let iri = &s[1..close];
        if iri.is_empty() {
            return Err("empty IRI".into());
        }
        Ok((Term::Iri(iri.to_string()), close + 1))
    } else if s.starts_with('"') {
        let (value, kind, used) = parse_quoted(s)?;
        Ok((Term::Literal { value, kind }, used))
    } else if let Some(b) = s.strip_prefix("_:") {
        let len = b.find(|c: char| c.is_whitespace()).unwrap_or(b.len());
        if len == 0 {
            return Err("empty blank node label".into());
        }
        Ok((Term::Blank(b[..len].to_string()), len + 2))
    } else if s.is_empty() {
        Err("missing term".into())
    } else {
        Err(alloc::format!("unexpected token at '{}'", s.chars().take(16).collect::<String>()))
    }
}
