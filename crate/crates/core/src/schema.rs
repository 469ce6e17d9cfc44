//! Type-level schema statistics: one row per (subject type, predicate, object type)
//! with its instance count.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::graph::{IngestError, NodeType, TripleGraph};
use crate::term::{PrefixMap, Term};

/// Subject or object type used for nodes without a type assertion.
pub const UNTYPED: &str = "untyped";
/// Object type used for every literal object.
pub const LITERAL_TYPE: &str = "str";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SchemaRow {
    pub subject_type: String,
    pub predicate: String,
    pub object_type: String,
    pub count: u64,
}

impl SchemaRow {
    pub fn new(s: impl Into<String>, p: impl Into<String>, o: impl Into<String>, count: u64) -> Self {
        SchemaRow { subject_type: s.into(), predicate: p.into(), object_type: o.into(), count }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaStats {
    pub rows: Vec<SchemaRow>,
    /// Prefixes used to compare compact names in rows against other spellings.
    pub prefixes: PrefixMap,
}

impl SchemaStats {
    /// Builds stats from rows, merging duplicate keys and sorting by count descending
    /// (ties broken by key).
    pub fn from_rows(rows: impl IntoIterator<Item = SchemaRow>, prefixes: PrefixMap) -> Self {
        let mut merged: BTreeMap<(String, String, String), u64> = BTreeMap::new();
        for r in rows {
            *merged.entry((r.subject_type, r.predicate, r.object_type)).or_default() += r.count;
        }
        let mut rows: Vec<SchemaRow> = merged
            .into_iter()
            .map(|((s, p, o), c)| SchemaRow::new(s, p, o, c))
            .collect();
        rows.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| (&a.subject_type, &a.predicate, &a.object_type).cmp(&(&b.subject_type, &b.predicate, &b.object_type)))
        });
        SchemaStats { rows, prefixes }
    }

    /// Like [`SchemaStats::from_rows`] but keeps rows in first-seen order.
    pub fn from_rows_in_order(rows: impl IntoIterator<Item = SchemaRow>, prefixes: PrefixMap) -> Self {
        let mut index: BTreeMap<(String, String, String), usize> = BTreeMap::new();
        let mut out: Vec<SchemaRow> = Vec::new();
        for r in rows {
            let key = (r.subject_type.clone(), r.predicate.clone(), r.object_type.clone());
            match index.get(&key) {
                Some(&i) => out[i].count += r.count,
                None => {
                    index.insert(key, out.len());
                    out.push(r);
                }
            }
        }
        SchemaStats { rows: out, prefixes }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn expand(&self, name: &str) -> String {
        self.prefixes.expand(name)
    }

    /// True if some row matches the (subject type, predicate, object type) key,
    /// comparing prefix-expanded forms.
    pub fn contains_key(&self, s: &str, p: &str, o: &str) -> bool {
        let (s, p, o) = (self.expand(s), self.expand(p), self.expand(o));
        self.rows.iter().any(|r| {
            self.expand(&r.subject_type) == s && self.expand(&r.predicate) == p && self.expand(&r.object_type) == o
        })
    }

    /// Prefix-expanded predicate set.
    pub fn predicate_set(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| self.expand(&r.predicate)).collect()
    }

    /// Prefix-expanded set of types appearing as subject or non-literal object.
    pub fn type_set(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for r in &self.rows {
            out.insert(self.expand(&r.subject_type));
            if r.object_type != LITERAL_TYPE {
                out.insert(self.expand(&r.object_type));
            }
        }
        out
    }

    pub fn has_type(&self, ty: &str) -> bool {
        self.type_set().contains(&self.expand(ty))
    }

    /// TSV rendering: `@prefix` lines, a header, then one row per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (p, ns) in self.prefixes.iter() {
            let _ = writeln!(out, "@prefix {p}: <{ns}>");
        }
        out.push_str("subject\tpredicate\tobject\tcount\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.subject_type, r.predicate, r.object_type, r.count);
        }
        out
    }

    /// Parses the TSV rendering, keeping the file's row order. Comma-separated
    /// rows (`s , p , o , count`) are accepted as well.
    pub fn parse_tsv(text: &str) -> Result<Self, IngestError> {
        let mut prefixes = PrefixMap::new();
        let mut rows = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| IngestError::Parse { line: n + 1, message };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(decl) = line.strip_prefix("@prefix") {
                let decl = decl.trim();
                let (name, ns) = decl
                    .split_once(':')
                    .ok_or_else(|| err("malformed @prefix".to_string()))?;
                let ns = ns.trim().trim_end_matches('.').trim();
                let ns = ns
                    .strip_prefix('<')
                    .and_then(|x| x.strip_suffix('>'))
                    .ok_or_else(|| err("prefix namespace must be <...>".to_string()))?;
                prefixes.insert(name.trim(), ns);
                continue;
            }
            let fields: Vec<&str> = if line.contains('\t') {
                line.split('\t').map(str::trim).collect()
            } else {
                line.split(',').map(str::trim).collect()
            };
            if fields.len() != 4 {
                return Err(err(alloc::format!("expected 4 fields, found {}", fields.len())));
            }
            if fields[0] == "subject" && fields[3] == "count" {
                continue;
            }
            let count = fields[3]
                .parse::<u64>()
                .map_err(|_| err(alloc::format!("invalid count '{}'", fields[3])))?;
            rows.push(SchemaRow::new(fields[0], fields[1], fields[2], count));
        }
        Ok(SchemaStats::from_rows_in_order(rows, prefixes))
    }

    /// Listing used inside prompts: `subject , predicate , object , count` per line.
    pub fn render_listing(&self) -> String {
        let mut out = String::from("subject , predicate , object , count\n");
        for r in &self.rows {
            let _ = writeln!(out, "{} , {} , {} , {}", r.subject_type, r.predicate, r.object_type, r.count);
        }
        out
    }
}

fn type_name(g: &TripleGraph, ty: NodeType) -> String {
    match ty {
        NodeType::Typed(t) => g.term(t).text().to_string(),
        NodeType::Untyped => UNTYPED.to_string(),
    }
}

/// Counts every non-type triple under (type(subject), predicate, type-or-literal(object)).
///
/// Type assertions themselves are not counted. Untyped subjects and untyped IRI
/// objects are reported as [`UNTYPED`]; all literal objects as [`LITERAL_TYPE`].
pub fn compute_schema_stats(g: &TripleGraph) -> SchemaStats {
    let rdf_type = g.rdf_type_id();
    let mut counts: BTreeMap<(NodeType, crate::graph::TermId, Option<NodeType>), u64> = BTreeMap::new();
    for &[s, p, o] in g.triple_ids() {
        if Some(p) == rdf_type {
            continue;
        }
        let ot = match g.term(o) {
            Term::Literal { .. } => None,
            _ => Some(g.type_of(o)),
        };
        *counts.entry((g.type_of(s), p, ot)).or_default() += 1;
    }
    let rows = counts.into_iter().map(|((st, p, ot), c)| {
        let o = match ot {
            None => LITERAL_TYPE.to_string(),
            Some(t) => type_name(g, t),
        };
        SchemaRow::new(type_name(g, st), g.term(p).text(), o, c)
    });
    SchemaStats::from_rows(rows, PrefixMap::new())
}
