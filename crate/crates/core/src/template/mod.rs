//! One-time generation of a verified subgraph query template from a task
//! instruction and schema statistics.
//!
//! Stages, in order: [`suggest_task_features`], [`prune_schema`],
//! [`map_to_bgps`], [`verify_bgps`], [`bgps_to_sparql`], [`verify_sparql`].
//! [`generate_template`] runs them all. Only the first, third and fifth stages
//! talk to the language model; every stage output is checked deterministically.

pub mod prompts;
mod stages;

pub use stages::{
    bgps_to_sparql, generate_template, map_to_bgps, parse_bgp_lines, parse_numbered_list, prune_schema,
    structural_violations, suggest_task_features, verify_bgps, verify_sparql, GenerateOptions,
};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::SchemaStats;
use crate::sparql::{parse_query, QueryAst, QueryError};

/// Sends one prompt and returns the raw completion.
pub trait LlmTransport {
    fn send(&self, prompt: &str) -> Result<String, String>;
}

impl<F: Fn(&str) -> Result<String, String>> LlmTransport for F {
    fn send(&self, prompt: &str) -> Result<String, String> {
        self(prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    NodeClassification,
    LinkPrediction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Knowledge graph name used in prompts.
    pub kg_name: String,
    pub instruction: String,
    /// Target node type, as written in the schema statistics.
    pub target_type: String,
    pub hops: usize,
}

impl TaskSpec {
    pub fn validate(&self, stats: &SchemaStats) -> Result<(), TemplateError> {
        if self.instruction.trim().is_empty() {
            return Err(TemplateError::Config("task instruction is empty".into()));
        }
        if !(1..=3).contains(&self.hops) {
            return Err(TemplateError::Config(alloc::format!("hops must be in 1..=3, got {}", self.hops)));
        }
        if !stats.has_type(&self.target_type) {
            return Err(TemplateError::Config(alloc::format!(
                "target type {} does not occur in the schema statistics",
                self.target_type
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BgpCandidate {
    pub subject_type: String,
    pub predicate: String,
    pub object_type: String,
    /// 1-based position in the model's ranking.
    pub rank: usize,
}

/// One prompt/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub stage: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub exchanges: Vec<Exchange>,
    /// Verification outcomes per stage, in order.
    pub checks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTemplate {
    pub text: String,
    pub parsed: QueryAst,
    pub provenance: Provenance,
}

impl QueryTemplate {
    /// Parses a stored template; provenance is left empty.
    pub fn from_text(text: impl Into<String>) -> Result<Self, QueryError> {
        let text = text.into();
        let parsed = parse_query(&text)?;
        if !parsed.has_placeholder() {
            return Err(QueryError::NoPlaceholder);
        }
        Ok(QueryTemplate { text, parsed, provenance: Provenance::default() })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("generation failed at {stage}: {message}")]
    Generation { stage: String, message: String },
    #[error("verification failed: {}", violations.join("; "))]
    Verification { violations: Vec<String> },
}
