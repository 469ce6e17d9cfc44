use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use super::prompts::{self, render};
use super::{BgpCandidate, Exchange, LlmTransport, Provenance, QueryTemplate, TaskSpec, TemplateError};
use crate::schema::{SchemaStats, LITERAL_TYPE, UNTYPED};
use crate::sparql::{parse_query, IriRef, PatternTerm, QueryAst, PLACEHOLDER};
use crate::term::{PrefixMap, RDF_TYPE};

const ATTEMPTS: usize = 3;
const PROBE_TARGETS: &str = "<urn:kgq:probe-1> <urn:kgq:probe-2>";

fn ask<L: LlmTransport + ?Sized>(llm: &L, stage: &str, prompt: String, prov: &mut Provenance) -> Result<String, TemplateError> {
    let response = llm.send(&prompt).map_err(TemplateError::Transport)?;
    prov.exchanges.push(Exchange { stage: stage.to_string(), prompt, response: response.clone() });
    Ok(response)
}

fn generation(stage: &str, message: impl Into<String>) -> TemplateError {
    TemplateError::Generation { stage: stage.to_string(), message: message.into() }
}

/// Splits `12. text` / `12) text` into its number and text.
fn numbered(line: &str) -> Option<(usize, &str)> {
    let line = line.trim().trim_start_matches(['-', '*']).trim_start();
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = line[digits..].strip_prefix(['.', ')'])?;
    let n = line[..digits].parse().ok()?;
    let text = rest.trim();
    (!text.is_empty()).then_some((n, text))
}

/// Items of a numbered list, ordered by their stated numbers (ties keep their
/// order of appearance). Unnumbered lines are ignored.
pub fn parse_numbered_list(text: &str) -> Vec<String> {
    let mut items: Vec<(usize, &str)> = text.lines().filter_map(numbered).collect();
    items.sort_by_key(|&(n, _)| n);
    items.into_iter().map(|(_, t)| t.to_string()).collect()
}

pub fn suggest_task_features<L: LlmTransport + ?Sized>(
    t: &TaskSpec,
    llm: &L,
    prov: &mut Provenance,
) -> Result<Vec<String>, TemplateError> {
    const STAGE: &str = "suggest-features";
    if t.instruction.trim().is_empty() {
        return Err(TemplateError::Config("task instruction is empty".into()));
    }
    let prompt = render(prompts::SUGGEST_FEATURES, &[("<task>", t.instruction.trim())]);
    for _ in 0..ATTEMPTS {
        let items = parse_numbered_list(&ask(llm, STAGE, prompt.clone(), prov)?);
        if !items.is_empty() {
            prov.checks.push(alloc::format!("{STAGE}: {} features", items.len()));
            return Ok(items);
        }
    }
    Err(generation(STAGE, alloc::format!("no numbered list after {ATTEMPTS} attempts")))
}

/// Keeps the rows within `hops` of the target type on the undirected type
/// graph: a row is kept when one of its endpoints is at distance `< hops`.
pub fn prune_schema(stats: &SchemaStats, t: &TaskSpec) -> Result<SchemaStats, TemplateError> {
    let target = stats.expand(&t.target_type);
    let mut adj: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let endpoints: Vec<(String, Option<String>)> = stats
        .rows
        .iter()
        .map(|r| {
            let o = (r.object_type != LITERAL_TYPE).then(|| stats.expand(&r.object_type));
            (stats.expand(&r.subject_type), o)
        })
        .collect();
    for (s, o) in &endpoints {
        adj.entry(s.clone()).or_default();
        if let Some(o) = o {
            adj.entry(s.clone()).or_default().insert(o.clone());
            adj.entry(o.clone()).or_default().insert(s.clone());
        }
    }
    if !adj.contains_key(&target) {
        return Err(TemplateError::Config(alloc::format!("target type {} not in schema", t.target_type)));
    }
    let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
    dist.insert(&target, 0);
    let mut queue = VecDeque::from([target.as_str()]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u];
        for v in &adj[u] {
            if !dist.contains_key(v.as_str()) {
                dist.insert(v, d + 1);
                queue.push_back(v);
            }
        }
    }
    let near = |x: &str| dist.get(x).is_some_and(|&d| d < t.hops);
    let rows = stats
        .rows
        .iter()
        .zip(&endpoints)
        .filter(|(_, (s, o))| near(s) || o.as_deref().is_some_and(near))
        .map(|(r, _)| r.clone())
        .collect();
    Ok(SchemaStats { rows, prefixes: stats.prefixes.clone() })
}

/// `(subject, predicate, object)` triples from a line-per-triple response.
/// Fields are comma- or tab-separated; numbering, bullets, a header line and a
/// trailing count column are tolerated.
pub fn parse_bgp_lines(text: &str) -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut line = line.trim();
        if line.starts_with("```") {
            continue;
        }
        if let Some((_, rest)) = numbered(line) {
            line = rest;
        }
        let line = line.trim_start_matches(['-', '*']).trim().trim_matches(['(', ')', '`']);
        let spaced = !line.contains('\t') && !line.contains(',');
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t')
        } else if line.contains(',') {
            line.split(',')
        } else {
            line.split(' ')
        }
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .collect();
        if fields.len() < 3 || (fields[0] == "subject" && fields[1] == "predicate") {
            continue;
        }
        // Space-separated lines only count when they look like names, not prose.
        if spaced && !fields[..3].iter().all(|f| f.contains(':') || *f == LITERAL_TYPE || *f == UNTYPED) {
            continue;
        }
        out.push((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()));
    }
    out
}

fn numbered_block(items: &[String]) -> String {
    let mut s = String::new();
    for (i, f) in items.iter().enumerate() {
        let _ = writeln!(s, "{}. {f}", i + 1);
    }
    s.trim_end().to_string()
}

pub fn map_to_bgps<L: LlmTransport + ?Sized>(
    features: &[String],
    pruned: &SchemaStats,
    t: &TaskSpec,
    llm: &L,
    k: usize,
    prov: &mut Provenance,
) -> Result<Vec<BgpCandidate>, TemplateError> {
    const STAGE: &str = "map-to-bgps";
    if pruned.is_empty() {
        return Err(generation(STAGE, "pruned schema is empty"));
    }
    if k == 0 {
        return Err(TemplateError::Config("top-k must be at least 1".into()));
    }
    let listing = pruned.render_listing();
    let k_text = k.to_string();
    let prompt = render(
        prompts::FEATURES_TO_BGPS,
        &[
            ("<KG-schema>", listing.trim_end()),
            ("<suggested-features>", &numbered_block(features)),
            ("<KG>", &t.kg_name),
            ("<K>", &k_text),
        ],
    );
    let response = ask(llm, STAGE, prompt, prov)?;
    let cands: Vec<BgpCandidate> = parse_bgp_lines(&response)
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (s, p, o))| BgpCandidate { subject_type: s, predicate: p, object_type: o, rank: i + 1 })
        .collect();
    if cands.is_empty() {
        return Err(generation(STAGE, "no schema triple could be parsed from the response"));
    }
    prov.checks.push(alloc::format!("{STAGE}: {} candidates", cands.len()));
    Ok(cands)
}

/// Keeps the candidates whose key occurs in `pruned`, in order.
pub fn verify_bgps(cands: &[BgpCandidate], pruned: &SchemaStats) -> Result<Vec<BgpCandidate>, TemplateError> {
    let (kept, rejected): (Vec<&BgpCandidate>, Vec<&BgpCandidate>) = cands
        .iter()
        .partition(|c| pruned.contains_key(&c.subject_type, &c.predicate, &c.object_type));
    if kept.is_empty() {
        let list: Vec<String> = rejected
            .iter()
            .map(|c| alloc::format!("({}, {}, {})", c.subject_type, c.predicate, c.object_type))
            .collect();
        return Err(generation("verify-bgps", alloc::format!("every candidate rejected: {}", list.join(", "))));
    }
    Ok(kept.into_iter().cloned().collect())
}

/// Strips surrounding prose markers and code fences from a completion.
fn clean_query(response: &str) -> String {
    let text = response.trim();
    if let Some(start) = text.find("```") {
        let after = &text[start + 3..];
        let body = after.split_once('\n').map_or("", |(_, b)| b);
        let body = body.split("```").next().unwrap_or(body);
        return body.trim().to_string();
    }
    text.to_string()
}

fn parse_with_probe(text: &str) -> Result<QueryAst, String> {
    if text.trim().is_empty() {
        return Err("empty query".into());
    }
    let probe = text.replace(&alloc::format!("<{PLACEHOLDER}>"), PROBE_TARGETS);
    parse_query(&probe).map_err(|e| alloc::format!("does not parse after placeholder substitution: {e}"))?;
    parse_query(text).map_err(|e| alloc::format!("does not parse: {e}"))
}

fn values_violations(q: &QueryAst) -> Vec<String> {
    let mut out = Vec::new();
    for (i, b) in q.branches.iter().enumerate() {
        match &b.values {
            None => out.push(alloc::format!("branch {} has no VALUES clause", i + 1)),
            Some(v) if !v.values.iter().any(IriRef::is_placeholder) => {
                out.push(alloc::format!("branch {} VALUES ?{} lacks <{PLACEHOLDER}>", i + 1, v.var))
            }
            Some(_) => {}
        }
    }
    out
}

fn query_predicate_spellings(q: &QueryAst) -> BTreeSet<String> {
    q.branches.iter().flat_map(|b| b.predicates()).flat_map(|i| i.spellings(&q.prefixes)).collect()
}

fn known(spellings: &BTreeSet<String>, name: &str, prefixes: &PrefixMap) -> bool {
    prefixes.spellings(name).iter().any(|s| spellings.contains(s))
}

/// Problems that make a generated query unusable as a template: parse
/// failures, branches without a `VALUES` placeholder, and candidates whose
/// predicate the query does not use.
pub fn structural_violations(text: &str, cands: &[BgpCandidate], prefixes: &PrefixMap) -> Vec<String> {
    let q = match parse_with_probe(text) {
        Ok(q) => q,
        Err(e) => return alloc::vec![e],
    };
    let mut out = values_violations(&q);
    let used = query_predicate_spellings(&q);
    for c in cands {
        if !known(&used, &c.predicate, prefixes) {
            out.push(alloc::format!("BGP ({}, {}, {}) is not used", c.subject_type, c.predicate, c.object_type));
        }
    }
    out
}

pub fn bgps_to_sparql<L: LlmTransport + ?Sized>(
    cands: &[BgpCandidate],
    t: &TaskSpec,
    example: &str,
    prefixes: &PrefixMap,
    llm: &L,
    prov: &mut Provenance,
) -> Result<QueryTemplate, TemplateError> {
    const STAGE: &str = "bgps-to-sparql";
    const REFINE: &str = "refine-sparql";
    if cands.is_empty() {
        return Err(generation(STAGE, "no BGP candidates"));
    }
    let mut list = String::new();
    for c in cands {
        let _ = writeln!(list, "{} , {} , {}", c.subject_type, c.predicate, c.object_type);
    }
    let prompt = render(
        prompts::BGPS_TO_SPARQL,
        &[
            ("<BGP-List>", list.trim_end()),
            ("<SPARQL-Example>", example.trim()),
            ("<KG>", &t.kg_name),
            ("<VT>", &t.target_type),
        ],
    );
    let mut current = clean_query(&ask(llm, STAGE, prompt, prov)?);
    let mut violations: Vec<String> = Vec::new();
    for round in 1..=ATTEMPTS {
        let mut slot = current.clone();
        if !violations.is_empty() {
            slot.push_str("\n-------- Violations ----------------");
            for v in &violations {
                slot.push_str("\n- ");
                slot.push_str(v);
            }
        }
        let prompt = render(prompts::REFINE_SPARQL, &[("<sparql-query>", &slot)]);
        current = clean_query(&ask(llm, REFINE, prompt, prov)?);
        violations = structural_violations(&current, cands, prefixes);
        if violations.is_empty() {
            prov.checks.push(alloc::format!("{REFINE}: accepted in round {round}"));
            let parsed = parse_query(&current).expect("checked by structural_violations");
            return Ok(QueryTemplate { text: current, parsed, provenance: Provenance::default() });
        }
        prov.checks.push(alloc::format!("{REFINE}: round {round} rejected: {}", violations.join("; ")));
    }
    Err(generation(REFINE, alloc::format!("still invalid after {ATTEMPTS} rounds: {}", violations.join("; "))))
}

/// Accepts `q` only if it parses after placeholder substitution, every
/// predicate is in `pruned` (or is `rdf:type`), and every branch carries the
/// `VALUES` placeholder.
pub fn verify_sparql(q: QueryTemplate, pruned: &SchemaStats) -> Result<QueryTemplate, TemplateError> {
    let ast = parse_with_probe(&q.text).map_err(|e| TemplateError::Verification { violations: alloc::vec![e] })?;
    let mut violations = values_violations(&ast);
    let mut allowed: BTreeSet<String> = pruned.predicate_set();
    allowed.extend(pruned.rows.iter().map(|r| r.predicate.clone()));
    for (i, b) in ast.branches.iter().enumerate() {
        for p in &b.patterns {
            match &p.predicate {
                PatternTerm::Iri(iri) => {
                    let sp = iri.spellings(&ast.prefixes);
                    if sp[0] != RDF_TYPE && !sp.iter().any(|s| allowed.contains(s)) {
                        violations.push(alloc::format!("predicate {iri} in branch {} is not in the schema", i + 1));
                    }
                }
                PatternTerm::Var(v) => violations.push(alloc::format!("variable predicate ?{v} in branch {}", i + 1)),
                PatternTerm::Literal { .. } => {
                    violations.push(alloc::format!("literal predicate in branch {}", i + 1))
                }
            }
        }
    }
    if !violations.is_empty() {
        return Err(TemplateError::Verification { violations });
    }
    Ok(QueryTemplate { parsed: ast, ..q })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Maximum number of schema triples requested from the model.
    pub top_k: usize,
    /// Example query for the SPARQL prompt.
    pub example: String,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { top_k: 10, example: prompts::DEFAULT_SPARQL_EXAMPLE.to_string() }
    }
}

/// Runs every stage. On success the template carries the full provenance.
pub fn generate_template<L: LlmTransport + ?Sized>(
    t: &TaskSpec,
    stats: &SchemaStats,
    llm: &L,
    opts: &GenerateOptions,
) -> Result<QueryTemplate, TemplateError> {
    t.validate(stats)?;
    let mut prov = Provenance::default();
    let features = suggest_task_features(t, llm, &mut prov)?;
    let pruned = prune_schema(stats, t)?;
    prov.checks.push(alloc::format!("prune-schema: {} of {} rows kept", pruned.len(), stats.len()));
    let cands = map_to_bgps(&features, &pruned, t, llm, opts.top_k, &mut prov)?;
    let verified = verify_bgps(&cands, &pruned)?;
    prov.checks.push(alloc::format!("verify-bgps: {} of {} kept", verified.len(), cands.len()));
    let q = bgps_to_sparql(&verified, t, &opts.example, &pruned.prefixes, llm, &mut prov)?;
    let mut q = verify_sparql(q, &pruned)?;
    prov.checks.push("verify-sparql: accepted".to_string());
    q.provenance = prov;
    Ok(q)
}
