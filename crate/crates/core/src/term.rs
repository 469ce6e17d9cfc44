//! RDF terms, triples and prefix maps.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_GYEAR: &str = "http://www.w3.org/2001/XMLSchema#gYear";

/// Kind tag carried by every literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LiteralKind {
    Str,
    Integer,
    Year,
}

impl LiteralKind {
    fn from_datatype(dt: &str) -> Self {
        match dt {
            XSD_INTEGER | "xsd:integer" | "xsd:int" | "xsd:long" => LiteralKind::Integer,
            XSD_GYEAR | "xsd:gYear" => LiteralKind::Year,
            _ => LiteralKind::Str,
        }
    }

    fn datatype_suffix(self) -> &'static str {
        match self {
            LiteralKind::Str => "",
            LiteralKind::Integer => "^^xsd:integer",
            LiteralKind::Year => "^^xsd:gYear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    /// An IRI, stored as written (full IRI or compact `prefix:local` form).
    Iri(String),
    /// Blank node label without the `_:` prefix.
    Blank(String),
    Literal { value: String, kind: LiteralKind },
}

impl Term {
    pub fn iri(s: impl Into<String>) -> Self {
        Term::Iri(s.into())
    }

    pub fn string(s: impl Into<String>) -> Self {
        Term::Literal { value: s.into(), kind: LiteralKind::Str }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(s) => Some(s),
            _ => None,
        }
    }

    /// Identifier text for IRIs and blank nodes; lexical value for literals.
    pub fn text(&self) -> &str {
        match self {
            Term::Iri(s) | Term::Blank(s) => s,
            Term::Literal { value, .. } => value,
        }
    }

    /// Renders the term as a single TSV field that [`parse_field`] reads back.
    pub fn to_tsv_field(&self) -> String {
        match self {
            Term::Iri(s) if s == RDF_TYPE => "a".to_string(),
            Term::Iri(s) => {
                if needs_brackets(s) {
                    let mut out = String::with_capacity(s.len() + 2);
                    out.push('<');
                    out.push_str(s);
                    out.push('>');
                    out
                } else {
                    s.clone()
                }
            }
            Term::Blank(b) => {
                let mut out = String::from("_:");
                out.push_str(b);
                out
            }
            Term::Literal { value, kind } => {
                let mut out = quote_literal(value);
                out.push_str(kind.datatype_suffix());
                out
            }
        }
    }
}

fn needs_brackets(s: &str) -> bool {
    s.is_empty()
        || s == "a"
        || s.starts_with('"')
        || s.starts_with('<')
        || s.starts_with("_:")
        || s.chars().any(|c| c.is_whitespace() || c == '>')
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(s) => write!(f, "<{s}>"),
            Term::Blank(b) => write!(f, "_:{b}"),
            Term::Literal { value, kind } => {
                write!(f, "{}{}", quote_literal(value), kind.datatype_suffix())
            }
        }
    }
}

pub(crate) fn quote_literal(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Parses a quoted literal starting at `s[0] == '"'`.
///
/// Returns the unescaped value, its kind, and the number of bytes consumed
/// (including any `^^datatype` or `@lang` suffix).
pub(crate) fn parse_quoted(s: &str) -> Result<(String, LiteralKind, usize), String> {
    let bytes = s.as_bytes();
    debug_assert_eq!(bytes.first(), Some(&b'"'));
    let mut value = String::new();
    let mut chars = s.char_indices().skip(1);
    let mut end = None;
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => {
                end = Some(i + 1);
                break;
            }
            '\\' => match chars.next() {
                Some((_, 'n')) => value.push('\n'),
                Some((_, 't')) => value.push('\t'),
                Some((_, 'r')) => value.push('\r'),
                Some((_, '"')) => value.push('"'),
                Some((_, '\\')) => value.push('\\'),
                Some((_, other)) => return Err(alloc::format!("unknown escape \\{other}")),
                None => return Err("unterminated escape".to_string()),
            },
            c => value.push(c),
        }
    }
    let mut pos = end.ok_or_else(|| "unterminated literal".to_string())?;
    let rest = &s[pos..];
    let mut kind = LiteralKind::Str;
    if let Some(dt) = rest.strip_prefix("^^") {
        let (name, used) = if let Some(inner) = dt.strip_prefix('<') {
            let close = inner.find('>').ok_or_else(|| "unterminated datatype IRI".to_string())?;
            (&inner[..close], close + 2)
        } else {
            let len = dt
                .find(|c: char| c.is_whitespace())
                .unwrap_or(dt.len());
            (&dt[..len], len)
        };
        if name.is_empty() {
            return Err("empty datatype".to_string());
        }
        kind = LiteralKind::from_datatype(name);
        pos += 2 + used;
    } else if let Some(lang) = rest.strip_prefix('@') {
        let len = lang
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
            .unwrap_or(lang.len());
        pos += 1 + len;
    }
    Ok((value, kind, pos))
}

/// Normalizes the `a` shorthand and the common spellings of rdf:type.
pub(crate) fn canonical_predicate(s: &str) -> &str {
    match s {
        "a" | "rdf:type" | RDF_TYPE => RDF_TYPE,
        other => other,
    }
}

/// One subject-predicate-object statement.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    /// Builds a triple, rejecting literal or empty subjects and non-IRI predicates.
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, String> {
        match &subject {
            Term::Literal { .. } => return Err("subject must be an IRI or blank node".into()),
            t if t.text().is_empty() => return Err("empty subject".into()),
            _ => {}
        }
        let predicate = match predicate {
            Term::Iri(p) if !p.is_empty() => Term::Iri(canonical_predicate(&p).to_string()),
            _ => return Err("predicate must be a non-empty IRI".into()),
        };
        if !object.is_literal() && object.text().is_empty() {
            return Err("empty object identifier".into());
        }
        Ok(Triple { subject, predicate, object })
    }

    pub fn is_type_assertion(&self) -> bool {
        self.predicate.as_iri() == Some(RDF_TYPE)
    }
}

/// Prefix label (without the colon) to namespace IRI.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixMap {
    map: BTreeMap<String, String>,
}

impl PrefixMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prefix: impl Into<String>, namespace: impl Into<String>) {
        self.map.insert(prefix.into(), namespace.into());
    }

    pub fn get(&self, prefix: &str) -> Option<&str> {
        self.map.get(prefix).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Expands `prefix:local` when the prefix is declared; otherwise returns the input.
    pub fn expand(&self, name: &str) -> String {
        let name = canonical_predicate(name);
        if let Some((prefix, local)) = name.split_once(':') {
            if let Some(ns) = self.map.get(prefix) {
                let mut out = String::with_capacity(ns.len() + local.len());
                out.push_str(ns);
                out.push_str(local);
                return out;
            }
        }
        name.to_string()
    }

    /// The names under which `name` may be stored in a graph: its expansion and the
    /// text as written, deduplicated.
    pub fn spellings(&self, name: &str) -> Vec<String> {
        let expanded = self.expand(name);
        let mut out = alloc::vec![expanded];
        let written = canonical_predicate(name);
        if out[0] != written {
            out.push(written.to_string());
        }
        out
    }
}

/// Parses one whitespace-free TSV / N-Triples field into a term.
pub(crate) fn parse_field(field: &str) -> Result<Term, String> {
    let field = field.trim();
    if field.is_empty() {
        return Err("empty field".into());
    }
    if field.starts_with('"') {
        let (value, kind, used) = parse_quoted(field)?;
        if used != field.len() {
            return Err(alloc::format!("trailing characters after literal: {}", &field[used..]));
        }
        return Ok(Term::Literal { value, kind });
    }
    if let Some(b) = field.strip_prefix("_:") {
        if b.is_empty() {
            return Err("empty blank node label".into());
        }
        return Ok(Term::Blank(b.to_string()));
    }
    if let Some(inner) = field.strip_prefix('<') {
        let inner = inner
            .strip_suffix('>')
            .ok_or_else(|| "unterminated IRI".to_string())?;
        if inner.is_empty() {
            return Err("empty IRI".into());
        }
        return Ok(Term::Iri(inner.to_string()));
    }
    Ok(Term::Iri(field.to_string()))
}
