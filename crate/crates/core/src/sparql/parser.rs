use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ast::*;
use super::QueryError;
use crate::term::{parse_quoted, LiteralKind, PrefixMap, RDF_TYPE};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    Iri(String),
    Prefixed(String),
    Str(String, LiteralKind),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn syntax(pos: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax { pos, message: message.into() }
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '%')
}

fn lex(text: &str) -> Result<Vec<Token>, QueryError> {
    let mut out = Vec::new();
    let mut i = 0;
    let bytes = text.as_bytes();
    while i < text.len() {
        let c = text[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '#' {
            // Comment to end of line.
            i = text[i..].find('\n').map_or(text.len(), |n| i + n);
            continue;
        }
        let start = i;
        match c {
            '{' | '}' | '(' | ')' | '.' | ',' | ';' => {
                out.push(Token { tok: Tok::Punct(c), pos: start });
                i += 1;
            }
            '?' | '$' => {
                let rest = &text[i + 1..];
                let len = rest
                    .find(|c: char| !(c.is_alphanumeric() || c == '_'))
                    .unwrap_or(rest.len());
                if len == 0 {
                    return Err(syntax(start, "empty variable name"));
                }
                out.push(Token { tok: Tok::Var(rest[..len].to_string()), pos: start });
                i += 1 + len;
            }
            '<' => {
                let close = text[i..]
                    .find('>')
                    .ok_or_else(|| syntax(start, "unterminated IRI"))?;
                let iri = &text[i + 1..i + close];
                if iri.chars().any(char::is_whitespace) {
                    return Err(syntax(start, "whitespace inside IRI"));
                }
                out.push(Token { tok: Tok::Iri(iri.to_string()), pos: start });
                i += close + 1;
            }
            '"' => {
                let (value, kind, used) = parse_quoted(&text[i..]).map_err(|m| syntax(start, m))?;
                out.push(Token { tok: Tok::Str(value, kind), pos: start });
                i += used;
            }
            c if is_name_char(c) => {
                let mut end = i;
                while end < text.len() {
                    let ch = text[end..].chars().next().unwrap();
                    if !is_name_char(ch) {
                        break;
                    }
                    end += ch.len_utf8();
                }
                // A name never ends with '.', which terminates the triple instead.
                while end > start + 1 && bytes[end - 1] == b'.' {
                    end -= 1;
                }
                let word = &text[start..end];
                if word.contains(':') {
                    out.push(Token { tok: Tok::Prefixed(word.to_string()), pos: start });
                } else {
                    out.push(Token { tok: Tok::Word(word.to_string()), pos: start });
                }
                i = end;
            }
            other => return Err(syntax(start, alloc::format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    idx: usize,
    end: usize,
    prefixes: PrefixMap,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |t| t.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.idx).cloned();
        self.idx += 1;
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(syntax(self.pos(), alloc::format!("expected {kw}")))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), QueryError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(syntax(self.pos(), alloc::format!("expected '{c}'")))
        }
    }

    fn expect_var(&mut self) -> Result<String, QueryError> {
        match self.next() {
            Some(Token { tok: Tok::Var(v), .. }) => Ok(v),
            t => Err(syntax(t.map_or(self.end, |t| t.pos), "expected variable")),
        }
    }

    fn check_prefix(&self, name: &str, pos: usize) -> Result<(), QueryError> {
        let prefix = name.split_once(':').map_or("", |(p, _)| p);
        if self.prefixes.get(prefix).is_none() {
            return Err(QueryError::UndeclaredPrefix { prefix: prefix.to_string(), pos });
        }
        Ok(())
    }

    fn iri(&mut self) -> Result<IriRef, QueryError> {
        match self.next() {
            Some(Token { tok: Tok::Iri(i), .. }) => Ok(IriRef::full(i)),
            Some(Token { tok: Tok::Prefixed(p), pos }) => {
                self.check_prefix(&p, pos)?;
                Ok(IriRef::prefixed(p))
            }
            t => Err(syntax(t.map_or(self.end, |t| t.pos), "expected IRI")),
        }
    }

    fn prologue(&mut self) -> Result<(), QueryError> {
        while self.eat_keyword("PREFIX") {
            let pos = self.pos();
            let name = match self.next() {
                Some(Token { tok: Tok::Prefixed(p), .. }) if p.ends_with(':') && p.matches(':').count() == 1 => {
                    p[..p.len() - 1].to_string()
                }
                _ => return Err(syntax(pos, "expected prefix label ending in ':'")),
            };
            let ns = match self.next() {
                Some(Token { tok: Tok::Iri(i), .. }) => i,
                t => return Err(syntax(t.map_or(self.end, |t| t.pos), "expected namespace IRI")),
            };
            self.prefixes.insert(name, ns);
        }
        Ok(())
    }

    fn projection(&mut self) -> Result<Vec<Projection>, QueryError> {
        self.eat_keyword("DISTINCT");
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Var(_)) => out.push(Projection::Var(self.expect_var()?)),
                Some(Tok::Punct('(')) => {
                    self.idx += 1;
                    let expr = match self.next() {
                        Some(Token { tok: Tok::Var(v), .. }) => ProjectionExpr::Var(v),
                        Some(Token { tok: Tok::Str(s, LiteralKind::Str), .. }) => ProjectionExpr::Literal(s),
                        t => return Err(syntax(t.map_or(self.end, |t| t.pos), "expected variable or string literal")),
                    };
                    self.expect_keyword("AS")?;
                    let var = self.expect_var()?;
                    self.expect_punct(')')?;
                    out.push(Projection::Alias { expr, var });
                }
                _ => break,
            }
        }
        if out.is_empty() {
            return Err(syntax(self.pos(), "empty projection"));
        }
        Ok(out)
    }

    fn pattern_term(&mut self, predicate_position: bool) -> Result<PatternTerm, QueryError> {
        let pos = self.pos();
        match self.next().map(|t| t.tok) {
            Some(Tok::Var(v)) => Ok(PatternTerm::Var(v)),
            Some(Tok::Iri(i)) => Ok(PatternTerm::Iri(IriRef::full(i))),
            Some(Tok::Prefixed(p)) => {
                self.check_prefix(&p, pos)?;
                Ok(PatternTerm::Iri(IriRef::prefixed(p)))
            }
            Some(Tok::Word(w)) if predicate_position && w == "a" => {
                Ok(PatternTerm::Iri(IriRef::full(RDF_TYPE)))
            }
            Some(Tok::Str(value, kind)) if !predicate_position => Ok(PatternTerm::Literal { value, kind }),
            _ => Err(syntax(pos, "expected term")),
        }
    }

    /// Elements of a group up to (not including) the closing brace.
    fn elements(&mut self) -> Result<SubSelect, QueryError> {
        let mut sub = SubSelect { projection: None, patterns: Vec::new(), binds: Vec::new(), values: None };
        loop {
            if self.peek() == Some(&Tok::Punct('}')) || self.peek().is_none() {
                break;
            }
            if self.eat_keyword("BIND") {
                self.expect_punct('(')?;
                let pos = self.pos();
                let value = match self.next().map(|t| t.tok) {
                    Some(Tok::Str(s, _)) => s,
                    _ => return Err(syntax(pos, "BIND supports string literals only")),
                };
                self.expect_keyword("AS")?;
                let var = self.expect_var()?;
                self.expect_punct(')')?;
                sub.binds.push(Bind { value, var });
            } else if self.eat_keyword("VALUES") {
                let pos = self.pos();
                if sub.values.is_some() {
                    return Err(syntax(pos, "more than one VALUES clause in a group"));
                }
                let var = self.expect_var()?;
                self.expect_punct('{')?;
                let mut values = Vec::new();
                while !self.eat_punct('}') {
                    values.push(self.iri()?);
                }
                sub.values = Some(ValuesClause { var, values });
            } else {
                let subject = self.pattern_term(false)?;
                if matches!(subject, PatternTerm::Literal { .. }) {
                    return Err(syntax(self.pos(), "literal subject"));
                }
                let predicate = self.pattern_term(true)?;
                let object = self.pattern_term(false)?;
                sub.patterns.push(TriplePattern { subject, predicate, object });
            }
            self.eat_punct('.');
        }
        Ok(sub)
    }

    /// `{ SELECT ... WHERE { ... } }` or `{ elements }`, opening brace already consumed.
    fn group(&mut self) -> Result<SubSelect, QueryError> {
        if self.eat_keyword("SELECT") {
            let projection = self.projection()?;
            self.eat_keyword("WHERE");
            self.expect_punct('{')?;
            let mut sub = self.elements()?;
            self.expect_punct('}')?;
            self.expect_punct('}')?;
            sub.projection = Some(projection);
            Ok(sub)
        } else {
            let sub = self.elements()?;
            self.expect_punct('}')?;
            Ok(sub)
        }
    }

    fn query(&mut self) -> Result<QueryAst, QueryError> {
        self.prologue()?;
        self.expect_keyword("SELECT")?;
        let projection = self.projection()?;
        let from_graph = if self.eat_keyword("FROM") {
            match self.next() {
                Some(Token { tok: Tok::Iri(i), .. }) => Some(i),
                t => return Err(syntax(t.map_or(self.end, |t| t.pos), "expected graph IRI after FROM")),
            }
        } else {
            None
        };
        self.eat_keyword("WHERE");
        self.expect_punct('{')?;
        let mut branches = Vec::new();
        if self.eat_punct('{') {
            branches.push(self.group()?);
            while self.eat_keyword("UNION") {
                self.expect_punct('{')?;
                branches.push(self.group()?);
            }
        } else {
            branches.push(self.elements()?);
        }
        self.expect_punct('}')?;
        if self.idx < self.toks.len() {
            return Err(syntax(self.pos(), "trailing input after query"));
        }
        Ok(QueryAst { prefixes: core::mem::take(&mut self.prefixes), from_graph, projection, branches })
    }
}

fn validate(q: &QueryAst) -> Result<(), QueryError> {
    for (i, b) in q.branches.iter().enumerate() {
        if b.patterns.is_empty() {
            return Err(QueryError::Invalid(alloc::format!("branch {i} has no triple patterns")));
        }
        let mut bound: BTreeSet<&str> = b.patterns.iter().flat_map(TriplePattern::vars).collect();
        if let Some(v) = &b.values {
            if !b.subject_vars().contains(v.var.as_str()) {
                return Err(QueryError::Invalid(alloc::format!(
                    "branch {i}: VALUES variable ?{} is not a pattern subject",
                    v.var
                )));
            }
        }
        for bind in &b.binds {
            if !bound.insert(bind.var.as_str()) {
                return Err(QueryError::Invalid(alloc::format!(
                    "branch {i}: BIND target ?{} is already bound",
                    bind.var
                )));
            }
        }
        let items: &[Projection] = match &b.projection {
            Some(p) => {
                if p.len() != q.projection.len() {
                    return Err(QueryError::Invalid(alloc::format!(
                        "branch {i} projects {} columns, outer query projects {}",
                        p.len(),
                        q.projection.len()
                    )));
                }
                p.as_slice()
            }
            None => q.projection.as_slice(),
        };
        for item in items {
            if let Some(v) = item.source_var() {
                if !bound.contains(v) {
                    return Err(QueryError::UnboundProjection { var: v.to_string(), branch: i });
                }
            }
        }
    }
    Ok(())
}

/// Parses and validates a query in the supported subset.
pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, idx: 0, end: text.len(), prefixes: PrefixMap::new() };
    let q = p.query()?;
    validate(&q)?;
    Ok(q)
}
