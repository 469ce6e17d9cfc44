//! `kgq` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kgq_core::template::LlmTransport;
use kgq_core::SchemaStats;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{ConfigError, TaskConfig};
use crate::pipeline::{self, PipelineError};
use crate::synth::{self, SynthConfig};
use crate::transport::{HttpConfig, HttpTransport, MockTransport};

#[derive(Debug, Parser)]
#[command(name = "kgq", version, about = "Query-aware GNN inference over knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a triple file; write a canonical snapshot and schema statistics.
    Ingest {
        kg: PathBuf,
        #[arg(long, default_value = "tsv")]
        format: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print schema statistics of a triple file, or re-render a statistics file.
    Stats {
        kg: Option<PathBuf>,
        #[arg(long, default_value = "tsv")]
        format: String,
        #[arg(long, conflicts_with = "kg")]
        schema: Option<PathBuf>,
    },
    /// Generate and verify the subgraph query template.
    GenTemplate(TaskArgs),
    /// Train the model on the subgraph of the training targets.
    Train(TaskArgs),
    /// Split the trained model into chunked embeddings and parameters.
    Decompose(TaskArgs),
    /// Predict for a list of targets from the decomposed stores.
    Infer {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the partial-load path against a full model load.
    Bench {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        targets: PathBuf,
    },
    /// Write a seeded synthetic graph, template, target lists and task config.
    Synth {
        #[arg(long, default_value_t = 200)]
        papers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TaskArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags that replace the config field of the same name.
#[derive(Debug, Default, Args, Serialize)]
struct Overrides {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    chunk_rows: Option<usize>,
    #[arg(long, value_parser = ["auto", "sparse", "dense"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    density_threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    parallel: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mock_llm: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    endpoint: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model_name: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hits_k: Option<usize>,
}

fn absolute(p: &Path) -> PathBuf {
    std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
}

impl TaskArgs {
    fn load(&self) -> Result<TaskConfig, PipelineError> {
        let mut v = serde_json::to_value(&self.overrides).expect("overrides serialize");
        if let Some(p) = &self.overrides.mock_llm {
            v["mock_llm"] = Value::String(absolute(p).to_string_lossy().into_owned());
        }
        let map: Map<String, Value> = v.as_object().cloned().unwrap_or_default();
        Ok(TaskConfig::load(&self.config, &map)?)
    }
}

fn transport(cfg: &TaskConfig) -> Result<Box<dyn LlmTransport>, PipelineError> {
    match &cfg.mock_llm {
        Some(dir) => Ok(Box::new(MockTransport::new(dir))),
        None => {
            let http = HttpConfig::from_env(cfg.endpoint.clone(), cfg.model_name.clone()).map_err(ConfigError::Invalid)?;
            Ok(Box::new(HttpTransport::new(http)))
        }
    }
}

fn execute(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Ingest { kg, format, out } => {
            let (g, stats) = pipeline::ingest(&kg, &format, &out)?;
            println!("{} triples, {} schema rows -> {}", g.len(), stats.len(), out.display());
        }
        Command::Stats { kg, format, schema } => {
            let stats = match (kg, schema) {
                (_, Some(path)) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|source| crate::disk::DiskError::Io { path: path.clone(), source })?;
                    SchemaStats::parse_tsv(&text).map_err(|source| PipelineError::Ingest { path, source })?
                }
                (Some(kg), None) => kgq_core::schema::compute_schema_stats(&pipeline::load_graph(&kg, &format)?),
                (None, None) => return Err(ConfigError::Invalid("stats needs a triple file or --schema".into()).into()),
            };
            print!("{}", stats.to_tsv());
        }
        Command::GenTemplate(args) => {
            let cfg = args.load()?;
            let llm = transport(&cfg)?;
            match pipeline::gen_template(&cfg, llm.as_ref()) {
                Ok(q) => {
                    println!("template with {} branches -> {}", q.parsed.branches.len(), cfg.template.display());
                }
                Err(e) => {
                    if let PipelineError::Template(kgq_core::template::TemplateError::Verification { violations }) = &e {
                        for v in violations {
                            eprintln!("violation: {v}");
                        }
                    }
                    return Err(e);
                }
            }
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let s = pipeline::train(&cfg)?;
            println!(
                "trained on {} targets ({} nodes, {} edges), final loss {:.6} -> {}",
                s.targets,
                s.sg_nodes,
                s.sg_edges,
                s.losses.last().copied().unwrap_or(f64::NAN),
                cfg.model_path().display()
            );
        }
        Command::Decompose(args) => {
            let cfg = args.load()?;
            let (emb, params) = pipeline::decompose(&cfg)?;
            println!("embeddings {} bytes, parameters {} bytes -> {}", emb.total_bytes(), params.bytes(), emb.dir().display());
        }
        Command::Infer { task, targets, out } => {
            let cfg = task.load()?;
            let o = pipeline::infer(&cfg, &targets, out.as_deref())?;
            println!("{} predictions -> {}", o.count, o.predictions.display());
            if let Some(m) = &o.metrics {
                println!("{}", serde_json::to_string(m).expect("metrics serialize"));
            }
        }
        Command::Bench { task, targets } => {
            let cfg = task.load()?;
            print!("{}", pipeline::bench(&cfg, &targets)?.table());
        }
        Command::Synth { papers, seed, out } => {
            synth::write_workspace(&out, &SynthConfig::with_papers(papers, seed))?;
            println!("synthetic task -> {}", out.join("task.json").display());
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
