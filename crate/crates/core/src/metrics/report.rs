use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, GroupScore, MetricsError};

/// One evaluated scope, e.g. `ddo/general/user/maximum_confidence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scope: String,
    pub macro_f1: f64,
    pub n: usize,
    pub se: Option<f64>,
    pub p_value: Option<f64>,
    pub confusion: ConfusionMatrix,
    /// Items excluded as unresolved.
    pub n_unresolved: usize,
    pub group_scores: Option<BTreeMap<String, GroupScore>>,
    /// Free-form provenance, e.g. the paired-test recipe.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn new(scope: impl Into<String>, confusion: ConfusionMatrix) -> Self {
        EvalReport {
            scope: scope.into(),
            macro_f1: confusion.macro_f1(),
            n: confusion.total() as usize,
            se: None,
            p_value: None,
            confusion,
            n_unresolved: 0,
            group_scores: None,
            notes: BTreeMap::new(),
        }
    }

    /// The stored F1 and n agree with the stored confusion counts.
    pub fn is_consistent(&self) -> bool {
        self.macro_f1 == self.confusion.macro_f1() && self.n as u64 == self.confusion.total()
    }

    pub fn rows(&self) -> Vec<EvalRow> {
        let mut rows = vec![EvalRow {
            scope: self.scope.clone(),
            group: "all".into(),
            n: self.n,
            f1: self.macro_f1,
            se: self.se,
            p: self.p_value,
        }];
        for (g, s) in self.group_scores.iter().flatten() {
            rows.push(EvalRow { scope: self.scope.clone(), group: g.clone(), n: s.n, f1: s.f1, se: None, p: None });
        }
        rows
    }
}

/// One CSV row: `scope, group, n, f1, se, p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scope: String,
    pub group: String,
    pub n: usize,
    pub f1: f64,
    pub se: Option<f64>,
    pub p: Option<f64>,
}

pub fn write_eval_csv(path: &Path, reports: &[EvalReport]) -> Result<(), MetricsError> {
    let io = |e: &dyn std::fmt::Display| MetricsError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
    for row in reports.iter().flat_map(EvalReport::rows) {
        w.serialize(row).map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))
}

pub fn write_eval_json(path: &Path, reports: &[EvalReport]) -> Result<(), MetricsError> {
    let io = |e: &dyn std::fmt::Display| MetricsError::Io(format!("{}: {e}", path.display()));
    let f = File::create(path).map_err(|e| io(&e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), reports).map_err(|e| io(&e))
}

pub fn read_eval_json(path: &Path) -> Result<Vec<EvalReport>, MetricsError> {
    let io = |e: &dyn std::fmt::Display| MetricsError::Io(format!("{}: {e}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| io(&e))?;
    serde_json::from_str(&text).map_err(|e| io(&e))
}
