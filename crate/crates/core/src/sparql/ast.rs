use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::term::{quote_literal, LiteralKind, PrefixMap, RDF_TYPE};

/// Target placeholder, lexed as the IRI `<VT-List>`.
pub const PLACEHOLDER: &str = "VT-List";

/// An IRI as written: a full IRI (`<...>` without brackets) or a `prefix:local` name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IriRef {
    pub text: String,
    pub prefixed: bool,
}

impl IriRef {
    pub fn full(text: impl Into<String>) -> Self {
        IriRef { text: text.into(), prefixed: false }
    }

    pub fn prefixed(text: impl Into<String>) -> Self {
        IriRef { text: text.into(), prefixed: true }
    }

    pub fn is_placeholder(&self) -> bool {
        !self.prefixed && self.text == PLACEHOLDER
    }

    /// Candidate stored spellings, most specific first.
    pub fn spellings(&self, prefixes: &PrefixMap) -> Vec<String> {
        if self.prefixed {
            prefixes.spellings(&self.text)
        } else {
            alloc::vec![self.text.clone()]
        }
    }

    pub fn expanded(&self, prefixes: &PrefixMap) -> String {
        if self.prefixed {
            prefixes.expand(&self.text)
        } else {
            self.text.clone()
        }
    }
}

impl fmt::Display for IriRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.prefixed {
            f.write_str(&self.text)
        } else {
            write!(f, "<{}>", self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternTerm {
    Var(String),
    Iri(IriRef),
    Literal { value: String, kind: LiteralKind },
}

impl PatternTerm {
    pub fn var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => write!(f, "?{v}"),
            PatternTerm::Iri(i) => write!(f, "{i}"),
            PatternTerm::Literal { value, kind } => {
                f.write_str(&quote_literal(value))?;
                match kind {
                    LiteralKind::Str => Ok(()),
                    LiteralKind::Integer => f.write_str("^^<http://www.w3.org/2001/XMLSchema#integer>"),
                    LiteralKind::Year => f.write_str("^^<http://www.w3.org/2001/XMLSchema#gYear>"),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        [&self.subject, &self.predicate, &self.object].into_iter().filter_map(PatternTerm::var)
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.subject)?;
        match &self.predicate {
            PatternTerm::Iri(i) if !i.prefixed && i.text == RDF_TYPE => f.write_str("a")?,
            p => write!(f, "{p}")?,
        }
        write!(f, " {}", self.object)
    }
}

/// `BIND("literal" AS ?var)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bind {
    pub value: String,
    pub var: String,
}

/// `VALUES ?var { <iri> ... }`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValuesClause {
    pub var: String,
    pub values: Vec<IriRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProjectionExpr {
    Var(String),
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Projection {
    Var(String),
    Alias { expr: ProjectionExpr, var: String },
}

impl Projection {
    /// Name of the output column.
    pub fn output(&self) -> &str {
        match self {
            Projection::Var(v) | Projection::Alias { var: v, .. } => v,
        }
    }

    /// Variable read from the solution, if any.
    pub fn source_var(&self) -> Option<&str> {
        match self {
            Projection::Var(v) | Projection::Alias { expr: ProjectionExpr::Var(v), .. } => Some(v),
            Projection::Alias { expr: ProjectionExpr::Literal(_), .. } => None,
        }
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Projection::Var(v) => write!(f, "?{v}"),
            Projection::Alias { expr: ProjectionExpr::Var(x), var } => write!(f, "(?{x} AS ?{var})"),
            Projection::Alias { expr: ProjectionExpr::Literal(l), var } => {
                write!(f, "({} AS ?{var})", quote_literal(l))
            }
        }
    }
}

/// One `UNION` branch: a nested sub-select, or a plain group when `projection` is `None`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubSelect {
    pub projection: Option<Vec<Projection>>,
    pub patterns: Vec<TriplePattern>,
    pub binds: Vec<Bind>,
    pub values: Option<ValuesClause>,
}

impl SubSelect {
    /// Variables bound by patterns, binds and the VALUES clause.
    pub fn bound_vars(&self) -> BTreeSet<&str> {
        let mut out: BTreeSet<&str> = self.patterns.iter().flat_map(TriplePattern::vars).collect();
        out.extend(self.binds.iter().map(|b| b.var.as_str()));
        if let Some(v) = &self.values {
            out.insert(v.var.as_str());
        }
        out
    }

    pub fn subject_vars(&self) -> BTreeSet<&str> {
        self.patterns.iter().filter_map(|p| p.subject.var()).collect()
    }

    /// All IRIs used in predicate position.
    pub fn predicates(&self) -> impl Iterator<Item = &IriRef> {
        self.patterns.iter().filter_map(|p| match &p.predicate {
            PatternTerm::Iri(i) => Some(i),
            _ => None,
        })
    }

    fn fmt_body(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.patterns {
            write!(f, " {p} .")?;
        }
        for b in &self.binds {
            write!(f, " BIND({} AS ?{}) .", quote_literal(&b.value), b.var)?;
        }
        if let Some(v) = &self.values {
            write!(f, " VALUES ?{} {{", v.var)?;
            for i in &v.values {
                write!(f, " {i}")?;
            }
            f.write_str(" } .")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAst {
    pub prefixes: PrefixMap,
    pub from_graph: Option<String>,
    pub projection: Vec<Projection>,
    pub branches: Vec<SubSelect>,
}

impl QueryAst {
    pub fn has_placeholder(&self) -> bool {
        self.branches
            .iter()
            .filter_map(|b| b.values.as_ref())
            .any(|v| v.values.iter().any(IriRef::is_placeholder))
    }

    /// Replaces the placeholder in every VALUES clause with `targets`.
    pub fn instantiate(&self, targets: &[IriRef]) -> QueryAst {
        let mut q = self.clone();
        for b in &mut q.branches {
            if let Some(v) = &mut b.values {
                if v.values.iter().any(IriRef::is_placeholder) {
                    let mut values: Vec<IriRef> = Vec::with_capacity(v.values.len() + targets.len());
                    for i in v.values.drain(..) {
                        if i.is_placeholder() {
                            values.extend(targets.iter().cloned());
                        } else {
                            values.push(i);
                        }
                    }
                    v.values = values;
                }
            }
        }
        q
    }

    /// Prefix-expanded predicates used anywhere in the query.
    pub fn predicate_set(&self) -> BTreeSet<String> {
        self.branches
            .iter()
            .flat_map(SubSelect::predicates)
            .map(|i| i.expanded(&self.prefixes))
            .collect()
    }

    pub fn output_vars(&self) -> Vec<&str> {
        self.projection.iter().map(Projection::output).collect()
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, ns) in self.prefixes.iter() {
            writeln!(f, "PREFIX {p}: <{ns}>")?;
        }
        f.write_str("SELECT")?;
        for p in &self.projection {
            write!(f, " {p}")?;
        }
        f.write_str("\n")?;
        if let Some(g) = &self.from_graph {
            writeln!(f, "FROM <{g}>")?;
        }
        f.write_str("WHERE {")?;
        let single_plain = self.branches.len() == 1 && self.branches[0].projection.is_none();
        if single_plain {
            self.branches[0].fmt_body(f)?;
            return f.write_str(" }\n");
        }
        f.write_str("\n")?;
        for (i, b) in self.branches.iter().enumerate() {
            if i > 0 {
                f.write_str("UNION\n")?;
            }
            match &b.projection {
                Some(proj) => {
                    f.write_str("{ SELECT")?;
                    for p in proj {
                        write!(f, " {p}")?;
                    }
                    f.write_str(" WHERE {")?;
                    b.fmt_body(f)?;
                    f.write_str(" } }\n")?;
                }
                None => {
                    f.write_str("{")?;
                    b.fmt_body(f)?;
                    f.write_str(" }\n")?;
                }
            }
        }
        f.write_str("}\n")
    }
}
