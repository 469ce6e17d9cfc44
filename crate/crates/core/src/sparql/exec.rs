use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::QueryError;
use crate::graph::{TermId, TripleGraph};
use crate::term::{PrefixMap, Term};

/// One solution row: output variable to value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Binding(pub BTreeMap<String, Term>);

impl Binding {
    pub fn get(&self, var: &str) -> Option<&Term> {
        self.0.get(var)
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Var(usize),
    Const(TermId),
    /// A constant that does not occur in the graph: the pattern matches nothing.
    Missing,
}

fn resolve_iri(g: &TripleGraph, iri: &IriRef, prefixes: &PrefixMap) -> Option<TermId> {
    iri.spellings(prefixes).iter().find_map(|s| g.lookup_iri(s))
}

struct CompiledBranch<'a> {
    vars: Vec<&'a str>,
    patterns: Vec<[Slot; 3]>,
    seeds: Option<(usize, Vec<TermId>)>,
}

fn compile<'a>(g: &TripleGraph, b: &'a SubSelect, prefixes: &PrefixMap) -> CompiledBranch<'a> {
    let mut vars: Vec<&'a str> = Vec::new();
    let slot_of = |v: &'a str, vars: &mut Vec<&'a str>| -> usize {
        match vars.iter().position(|x| *x == v) {
            Some(i) => i,
            None => {
                vars.push(v);
                vars.len() - 1
            }
        }
    };
    let mut patterns = Vec::with_capacity(b.patterns.len());
    for p in &b.patterns {
        let mut slots = [Slot::Missing; 3];
        for (k, t) in [&p.subject, &p.predicate, &p.object].into_iter().enumerate() {
            slots[k] = match t {
                PatternTerm::Var(v) => Slot::Var(slot_of(v, &mut vars)),
                PatternTerm::Iri(i) => resolve_iri(g, i, prefixes).map_or(Slot::Missing, Slot::Const),
                PatternTerm::Literal { value, kind } => g
                    .lookup(&Term::Literal { value: value.clone(), kind: *kind })
                    .map_or(Slot::Missing, Slot::Const),
            };
        }
        patterns.push(slots);
    }
    let seeds = b.values.as_ref().map(|v| {
        let slot = slot_of(&v.var, &mut vars);
        let ids: BTreeSet<TermId> = v.values.iter().filter_map(|i| resolve_iri(g, i, prefixes)).collect();
        (slot, ids.into_iter().collect())
    });
    CompiledBranch { vars, patterns, seeds }
}

fn eval_branch(g: &TripleGraph, c: &CompiledBranch<'_>) -> Vec<Vec<Option<TermId>>> {
    let width = c.vars.len();
    let mut rows: Vec<Vec<Option<TermId>>> = match &c.seeds {
        Some((slot, ids)) => ids
            .iter()
            .map(|&id| {
                let mut r = alloc::vec![None; width];
                r[*slot] = Some(id);
                r
            })
            .collect(),
        None => alloc::vec![alloc::vec![None; width]],
    };
    for pat in &c.patterns {
        if pat.iter().any(|s| matches!(s, Slot::Missing)) {
            return Vec::new();
        }
        let mut next = Vec::new();
        for row in &rows {
            let bound = |s: Slot| match s {
                Slot::Const(id) => Some(id),
                Slot::Var(i) => row[i],
                Slot::Missing => None,
            };
            for t in g.matching(bound(pat[0]), bound(pat[1]), bound(pat[2])) {
                let mut r = row.clone();
                let mut ok = true;
                for k in 0..3 {
                    if let Slot::Var(i) = pat[k] {
                        match r[i] {
                            Some(v) if v != t[k] => {
                                ok = false;
                                break;
                            }
                            _ => r[i] = Some(t[k]),
                        }
                    }
                }
                if ok {
                    next.push(r);
                }
            }
        }
        rows = next;
        if rows.is_empty() {
            break;
        }
    }
    rows
}

fn project_value(
    g: &TripleGraph,
    item: &Projection,
    c: &CompiledBranch<'_>,
    binds: &[Bind],
    row: &[Option<TermId>],
) -> Option<Term> {
    let var = match item {
        Projection::Alias { expr: ProjectionExpr::Literal(l), .. } => return Some(Term::string(l.clone())),
        Projection::Var(v) | Projection::Alias { expr: ProjectionExpr::Var(v), .. } => v.as_str(),
    };
    if let Some(b) = binds.iter().find(|b| b.var == var) {
        return Some(Term::string(b.value.clone()));
    }
    let slot = c.vars.iter().position(|x| *x == var)?;
    row[slot].map(|id| g.term(id).clone())
}

/// Evaluates every branch and unions the projected, deduplicated results.
pub fn execute(g: &TripleGraph, q: &QueryAst) -> BTreeSet<Binding> {
    let outputs: Vec<&str> = q.output_vars();
    let mut out = BTreeSet::new();
    for b in &q.branches {
        let c = compile(g, b, &q.prefixes);
        let items: &[Projection] = b.projection.as_deref().unwrap_or(&q.projection);
        for row in eval_branch(g, &c) {
            let mut binding = BTreeMap::new();
            for (name, item) in outputs.iter().zip(items) {
                if let Some(v) = project_value(g, item, &c, &b.binds, &row) {
                    binding.insert(name.to_string(), v);
                }
            }
            out.insert(Binding(binding));
        }
    }
    out
}

/// Instantiates the template's placeholder with `targets` in batches of
/// `batch_size` and unions the results.
pub fn execute_batched(
    g: &TripleGraph,
    template: &QueryAst,
    targets: &[IriRef],
    batch_size: usize,
) -> Result<BTreeSet<Binding>, QueryError> {
    if batch_size == 0 {
        return Err(QueryError::ZeroBatchSize);
    }
    if !template.has_placeholder() {
        return Err(QueryError::NoPlaceholder);
    }
    let mut out = BTreeSet::new();
    for batch in targets.chunks(batch_size) {
        out.extend(execute(g, &template.instantiate(batch)));
    }
    Ok(out)
}
