//! Per-task configuration: one flat JSON object, every field overridable by
//! the command-line flag of the same name.

use std::path::{Path, PathBuf};

use kgq_core::inference::{ModeSelect, TaskTarget, DEFAULT_DENSITY_THRESHOLD};
use kgq_core::rgcn::TrainHyper;
use kgq_core::template::{TaskKind, TaskSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::disk::DiskError;

pub const DEFAULT_CHUNK_ROWS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Task name; also the store sub-directory.
    pub task: String,
    pub kind: TaskKind,
    #[serde(default = "default_kg_name")]
    pub kg_name: String,
    pub instruction: String,
    /// Target type as written in the schema statistics.
    pub target_type: String,
    /// Label predicate (classification) or predicted relation (link prediction).
    pub predicate: String,
    /// Candidate tail type for link prediction.
    #[serde(default)]
    pub tail_type: Option<String>,
    #[serde(default = "default_hops")]
    pub hops: usize,

    /// Triple file the task is trained on.
    pub graph: PathBuf,
    #[serde(default = "default_format")]
    pub format: String,
    pub schema_stats: PathBuf,
    pub template: PathBuf,
    /// Training targets, one IRI per line. Defaults to every node of the target type.
    #[serde(default)]
    pub train_targets: Option<PathBuf>,
    pub store_root: PathBuf,
    /// Directory for the trained model, encodings and run outputs.
    pub out_dir: PathBuf,

    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_negatives")]
    pub negatives: usize,

    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_chunk_rows")]
    pub chunk_rows: usize,
    #[serde(default)]
    pub mode: ModeSelect,
    #[serde(default = "default_density")]
    pub density_threshold: f64,
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    #[serde(default = "default_hits_k")]
    pub hits_k: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,

    #[serde(default)]
    pub mock_llm: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
}

fn default_kg_name() -> String {
    "KG".into()
}
fn default_hops() -> usize {
    2
}
fn default_format() -> String {
    "tsv".into()
}
fn default_epochs() -> usize {
    TrainHyper::default().epochs
}
fn default_lr() -> f64 {
    TrainHyper::default().lr
}
fn default_layers() -> usize {
    TrainHyper::default().layers
}
fn default_hidden_dim() -> usize {
    TrainHyper::default().hidden_dim
}
fn default_negatives() -> usize {
    TrainHyper::default().negatives
}
fn default_batch_size() -> usize {
    256
}
fn default_chunk_rows() -> usize {
    DEFAULT_CHUNK_ROWS
}
fn default_density() -> f64 {
    DEFAULT_DENSITY_THRESHOLD
}
fn default_parallel() -> usize {
    1
}
fn default_hits_k() -> usize {
    10
}
fn default_top_k() -> usize {
    10
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Disk(#[from] DiskError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl TaskConfig {
    /// Reads `path`, applies `overrides` (a JSON object of flag values) and
    /// resolves relative paths against the config file's directory.
    pub fn load(path: &Path, overrides: &Map<String, Value>) -> Result<Self, ConfigError> {
        let mut v: Value = crate::disk::read_json(path)?;
        let obj = v.as_object_mut().ok_or_else(|| ConfigError::Invalid(format!("{} is not a JSON object", path.display())))?;
        for (k, x) in overrides {
            obj.insert(k.clone(), x.clone());
        }
        let mut c: TaskConfig = serde_json::from_value(v).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        c.validate()?;
        Ok(c)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.graph);
        fix(&mut self.schema_stats);
        fix(&mut self.template);
        fix(&mut self.store_root);
        fix(&mut self.out_dir);
        if let Some(p) = &mut self.train_targets {
            fix(p);
        }
        if let Some(p) = &mut self.mock_llm {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.task.is_empty() {
            return bad("task name is empty".into());
        }
        if self.batch_size == 0 || self.chunk_rows == 0 || self.parallel == 0 || self.hits_k == 0 {
            return bad("batch_size, chunk_rows, parallel and hits_k must be positive".into());
        }
        if self.kind == TaskKind::LinkPrediction && self.tail_type.is_none() {
            return bad("link prediction needs tail_type".into());
        }
        if !(0.0..=1.0).contains(&self.density_threshold) {
            return bad(format!("density_threshold {} outside [0, 1]", self.density_threshold));
        }
        Ok(())
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            kind: self.kind,
            kg_name: self.kg_name.clone(),
            instruction: self.instruction.clone(),
            target_type: self.target_type.clone(),
            hops: self.hops,
        }
    }

    /// Task target with names expanded by `expand` (the template's prefixes).
    pub fn task_target(&self, expand: impl Fn(&str) -> String) -> TaskTarget {
        match self.kind {
            TaskKind::NodeClassification => TaskTarget::Classify { label_predicate: expand(&self.predicate) },
            TaskKind::LinkPrediction => TaskTarget::Link {
                predicate: expand(&self.predicate),
                tail_type: expand(self.tail_type.as_deref().unwrap_or_default()),
            },
        }
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.epochs,
            lr: self.lr,
            layers: self.layers,
            hidden_dim: self.hidden_dim,
            seed: self.seed,
            negatives: self.negatives,
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.out_dir.join("model.json")
    }

    pub fn encodings_path(&self) -> PathBuf {
        self.out_dir.join("encodings.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write(dir: &Path, v: Value) -> PathBuf {
        let p = dir.join("task.json");
        std::fs::write(&p, v.to_string()).unwrap();
        p
    }

    fn minimal() -> Value {
        json!({
            "task": "pv", "kind": "node-classification", "instruction": "predict the venue",
            "target_type": "ex:Paper", "predicate": "ex:publishedIn", "graph": "kg.tsv",
            "schema_stats": "stats.tsv", "template": "t.rq", "store_root": "stores", "out_dir": "out", "seed": 7
        })
    }

    #[test]
    fn defaults_paths_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), minimal());
        let over = json!({"seed": 9, "chunk_rows": 16}).as_object().unwrap().clone();
        let c = TaskConfig::load(&p, &over).unwrap();
        assert_eq!((c.seed, c.chunk_rows, c.batch_size, c.hops), (9, 16, 256, 2));
        assert_eq!(c.graph, dir.path().join("kg.tsv"));
        assert_eq!(c.mode, ModeSelect::Auto);
    }

    #[test]
    fn seed_is_mandatory() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = minimal();
        v.as_object_mut().unwrap().remove("seed");
        let err = TaskConfig::load(&write(dir.path(), v), &Map::new()).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = minimal();
        v["chunk_size"] = json!(3);
        assert!(TaskConfig::load(&write(dir.path(), v), &Map::new()).is_err());
    }
}
