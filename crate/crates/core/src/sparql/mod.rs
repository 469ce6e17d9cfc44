//! The SPARQL subset used by subgraph templates.
//!
//! Supported: `PREFIX` declarations, `SELECT` with `(expr AS ?v)` aliasing, an
//! optional `FROM`, a `WHERE` body that is either a plain group or a `UNION`
//! of nested sub-selects, triple patterns (with the `a` shorthand), `BIND` of a
//! string literal and `VALUES` over a single variable. No `FILTER`,
//! `OPTIONAL` or property paths.
//!
//! Sub-select projections are mapped onto the outer projection by position, so
//! a branch may select `?author ?p ?o` under an outer `SELECT ?s ?p ?o`.

mod ast;
mod exec;
mod parser;

pub use ast::{Bind, IriRef, PatternTerm, Projection, ProjectionExpr, QueryAst, SubSelect, TriplePattern, ValuesClause, PLACEHOLDER};
pub use exec::{execute, execute_batched, Binding};
pub use parser::parse_query;

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("undeclared prefix '{prefix}:' at byte {pos}")]
    UndeclaredPrefix { prefix: String, pos: usize },
    #[error("projection variable ?{var} is unbound in branch {branch}")]
    UnboundProjection { var: String, branch: usize },
    #[error("invalid query: {0}")]
    Invalid(String),
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("template has no <VT-List> placeholder in any VALUES clause")]
    NoPlaceholder,
}
