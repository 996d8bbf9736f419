//! Reproducible commands over a run directory.
//!
//! Each command reads declared inputs, writes into the output directory and
//! leaves `manifests/<command>.json` with the config hash, seed and content
//! hashes of what it read and wrote.

mod analyses;
pub mod artifacts;
pub mod config;
pub mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;
use thiserror::Error;

pub use config::{
    interpolate, BackendKind, EmbeddingKind, LoadedConfig, Overrides, RunConfig,
};
pub use manifest::{FileDigest, Manifest};

use crate::backend::{BackendError, CompletionBackend, CompletionRequest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_MISSING_ARTIFACT: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;
pub const EXIT_PARTIAL: i32 = 5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("missing upstream artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("backend unreachable: {0}")]
    Transport(String),
    #[error("artifacts do not belong to this run: {0}")]
    ConfigMismatch(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn stage(stage: &'static str, e: impl fmt::Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) | PipelineError::ConfigMismatch(_) => EXIT_VALIDATION,
            PipelineError::MissingArtifact(_) => EXIT_MISSING_ARTIFACT,
            PipelineError::Transport(_) => EXIT_TRANSPORT,
            PipelineError::Io { .. } | PipelineError::Stage { .. } => EXIT_FAILURE,
        }
    }
}

impl From<BackendError> for PipelineError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Transient(m) | BackendError::Permanent(m) => PipelineError::Transport(m),
            BackendError::Cache(m) => PipelineError::Stage { stage: "cache", message: m },
            other => PipelineError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Synth,
    Ingest,
    Infer,
    Aggregate,
    Eval,
    Proximity,
    Lexical,
    Baseline,
    Sensitivity,
    Report,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Synth,
        Command::Ingest,
        Command::Infer,
        Command::Aggregate,
        Command::Eval,
        Command::Proximity,
        Command::Lexical,
        Command::Baseline,
        Command::Sensitivity,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Infer => "infer",
            Command::Aggregate => "aggregate",
            Command::Eval => "eval",
            Command::Proximity => "proximity",
            Command::Lexical => "lexical",
            Command::Baseline => "baseline",
            Command::Sensitivity => "sensitivity",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown command {s:?}"))
    }
}

/// A validated config plus the process-level switches that affect it.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    /// Environment values substituted into the config; redacted in manifests.
    pub interpolated: Vec<(String, String)>,
    /// No network access: mock or cache-only inference.
    pub offline: bool,
}

impl Run {
    pub fn new(config: RunConfig, interpolated: Vec<(String, String)>, offline: bool) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Run { config, interpolated, offline })
    }

    /// Loads `path`, applies `overrides` and reads `NO_NETWORK`.
    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self, PipelineError> {
        let LoadedConfig { mut config, interpolated } = RunConfig::load(path)?;
        config.apply(overrides);
        Run::new(config, interpolated, no_network())
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.config.out_dir.join(rel)
    }

    pub fn config_hash(&self) -> String {
        self.config.hash()
    }
}

/// `NO_NETWORK=1` (or `true`) in the environment.
pub fn no_network() -> bool {
    std::env::var("NO_NETWORK").is_ok_and(|v| v == "1" || v.eq_ignore_ascii_case("true"))
}

/// Stand-in for a remote backend when the network is disabled. It keeps the
/// configured model id, so cached answers are still found, and refuses every
/// uncached request.
pub struct OfflineBackend {
    model_id: String,
}

impl OfflineBackend {
    pub fn new(model_id: impl Into<String>) -> Self {
        OfflineBackend { model_id: model_id.into() }
    }
}

impl CompletionBackend for OfflineBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, _request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        Err(BackendError::Permanent("network disabled (NO_NETWORK=1) and the answer is not cached".into()))
    }

    fn is_network(&self) -> bool {
        false
    }
}

/// What a command did, before it is written as a manifest.
#[derive(Debug, Default)]
pub(crate) struct Stage {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub stats: BTreeMap<String, Value>,
    pub exit_code: i32,
}

impl Stage {
    pub fn stat(&mut self, key: &str, value: impl Into<Value>) {
        self.stats.insert(key.to_string(), value.into());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub command: Command,
    pub exit_code: i32,
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
}

/// Runs one command and writes its manifest.
pub fn run(command: Command, run: &Run) -> Result<Outcome, PipelineError> {
    let out = run.out_dir();
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    log::info!("{command}: output directory {}", out.display());
    let stage = match command {
        Command::Synth => stages::synth(run),
        Command::Ingest => stages::ingest(run),
        Command::Infer => stages::infer(run),
        Command::Aggregate => stages::aggregate(run),
        Command::Eval => stages::eval(run),
        Command::Proximity => analyses::proximity(run),
        Command::Lexical => analyses::lexical(run),
        Command::Baseline => analyses::baseline(run),
        Command::Sensitivity => analyses::sensitivity(run),
        Command::Report => analyses::report(run),
    }?;
    let digests = |paths: &[PathBuf]| -> Result<Vec<FileDigest>, PipelineError> {
        paths.iter().map(|p| manifest::digest(out, p)).collect()
    };
    let manifest = Manifest {
        command: command.as_str().into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: run.config_hash(),
        seed: run.config.seed,
        exit_code: stage.exit_code,
        config: run.config.redacted_json(&run.interpolated),
        inputs: digests(&stage.inputs)?,
        outputs: digests(&stage.outputs)?,
        stats: stage.stats,
    };
    let manifest_path = manifest.write(out)?;
    Ok(Outcome { command, exit_code: stage.exit_code, manifest_path, manifest })
}

/// The commands `all` runs, in order: the core chain, the enabled analyses,
/// then the report.
pub fn pipeline_commands(config: &RunConfig) -> Vec<Command> {
    let t = &config.analyses;
    let mut cmds = vec![Command::Ingest, Command::Infer, Command::Aggregate, Command::Eval];
    for (on, c) in [
        (t.proximity, Command::Proximity),
        (t.lexical, Command::Lexical),
        (t.baseline, Command::Baseline),
        (t.sensitivity, Command::Sensitivity),
    ] {
        if on {
            cmds.push(c);
        }
    }
    if t.sensitivity && !t.baseline {
        // the filter needs the classifier that `baseline` trains
        cmds.insert(cmds.len() - 1, Command::Baseline);
    }
    cmds.push(Command::Report);
    cmds
}

/// Runs the whole chain. A partial `infer` continues; exhausted transport
/// stops the chain. The returned code is the first non-zero one.
pub fn run_all(r: &Run) -> Result<Vec<Outcome>, PipelineError> {
    let mut outcomes = Vec::new();
    for c in pipeline_commands(&r.config) {
        let o = run(c, r)?;
        let stop = o.exit_code == EXIT_TRANSPORT;
        outcomes.push(o);
        if stop {
            break;
        }
    }
    Ok(outcomes)
}

pub fn combined_exit(outcomes: &[Outcome]) -> i32 {
    outcomes.iter().map(|o| o.exit_code).find(|&c| c != EXIT_OK).unwrap_or(EXIT_OK)
}
