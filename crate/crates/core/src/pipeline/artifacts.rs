//! File layout of a run directory and the JSONL records passed between
//! commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::aggregate::{Scored, UserVerdict};
use crate::backend::InferenceResult;
use crate::corpus::{Category, PartyLabel, TextUnit};

pub const CORPUS_DIR: &str = "corpus";
pub const TITLES_FILE: &str = "titles.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const VERDICTS: &str = "verdicts.jsonl";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_CSV: &str = "eval.csv";
pub const PROXIMITY_CSV: &str = "proximity.csv";
pub const PROXIMITY_SUMMARY: &str = "proximity_summary.json";
pub const LEXICAL_DIR: &str = "lexical";
pub const BASELINE_CSV: &str = "baseline_report.csv";
pub const POLITICAL_MODEL: &str = "models/political_classifier.bin";
pub const POLITICAL_SPLIT: &str = "models/political_split.json";
pub const SENSITIVITY: &str = "sensitivity.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const SYNTH_DIR: &str = "synthetic";
pub const DEFAULT_CACHE: &str = "cache/predictions.jsonl";

/// Evaluation scopes over text categories.
pub const SCOPES: [&str; 3] = ["all", "politics", "general"];

pub fn in_scope(scope: &str, category: Category) -> bool {
    match scope {
        "politics" => category.is_political(),
        "general" => !category.is_political(),
        _ => true,
    }
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub text_id: String,
    pub user_id: String,
    pub category: Category,
    pub party: Option<PartyLabel>,
    pub confidence: Option<u8>,
    /// Reason the response was rejected.
    pub malformed: Option<String>,
    pub model_id: String,
    pub template_version: String,
}

impl PredictionLine {
    pub fn new(text: &TextUnit, result: &InferenceResult, model_id: &str, template_version: &str) -> Self {
        let (party, confidence, malformed) = match result {
            Ok(p) => (Some(p.party), Some(p.confidence), None),
            Err(m) => (None, None, Some(m.reason.as_str().to_string())),
        };
        PredictionLine {
            text_id: text.text_id.clone(),
            user_id: text.user_id.clone(),
            category: text.category,
            party,
            confidence,
            malformed,
            model_id: model_id.into(),
            template_version: template_version.into(),
        }
    }

    /// The well-formed answer, if any.
    pub fn answer(&self) -> Option<(PartyLabel, u8)> {
        Some((self.party?, self.confidence?))
    }
}

/// A well-formed prediction with its text's metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Answer<'a> {
    pub line: &'a PredictionLine,
    pub party: PartyLabel,
    pub confidence: u8,
}

impl Scored for Answer<'_> {
    fn party(&self) -> PartyLabel {
        self.party
    }
    fn confidence(&self) -> u8 {
        self.confidence
    }
}

pub fn answers(lines: &[PredictionLine]) -> Vec<Answer<'_>> {
    lines.iter().filter_map(|l| l.answer().map(|(party, confidence)| Answer { line: l, party, confidence })).collect()
}

/// One line of `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub scope: String,
    #[serde(flatten)]
    pub verdict: UserVerdict,
}

/// Wraps a JSON report with the hash and seed of the run that made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(require(path)?).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

/// `path` if it exists, else a missing-artifact error.
pub fn require(path: &Path) -> Result<&Path, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact(path.to_path_buf()))
    }
}

pub fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    Ok(())
}

pub fn lexical_paths(out_dir: &Path, scope: &str) -> [PathBuf; 3] {
    let dir = out_dir.join(LEXICAL_DIR);
    let slug: String = scope.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    [
        dir.join(format!("{slug}_wordstats.csv")),
        dir.join(format!("{slug}_wordcloud.json")),
        dir.join(format!("{slug}_quantiles.csv")),
    ]
}
