#![no_std]

//! Query-aware GNN inference over knowledge graphs.
//!
//! The crate is `no_std` + `alloc`: every algorithm here is a pure function of
//! in-memory inputs. File layouts, the CLI, LLM transports and wall-clock
//! timing live in the `kgq` companion crate.
//!
//! Modules, bottom-up:
//! - [`term`] / [`graph`] / [`schema`]: the triple store and its type-level statistics.
//! - [`sparql`]: the query subset used for subgraph templates, parser and executor.
//! - [`template`]: the staged prompt pipeline that produces a verified query template.
//! - [`tensor`] / [`rgcn`]: RGCN layers, task heads, training and operation counting.
//! - [`store`]: row-wise chunk arithmetic and the embedding source abstraction.
//! - [`inference`]: subgraph extraction, compact-model instantiation and prediction.

extern crate alloc;

pub mod graph;
pub mod inference;
pub mod rgcn;
pub mod schema;
pub mod sparql;
pub mod store;
pub mod template;
pub mod tensor;
pub mod term;

mod hash;

pub use graph::{Direction, TripleFormat, TripleGraph};
pub use schema::{SchemaRow, SchemaStats};
pub use term::{LiteralKind, PrefixMap, Term, Triple};
