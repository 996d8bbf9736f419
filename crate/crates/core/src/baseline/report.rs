use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BaselineError, CvResult};

/// One line of `baseline_report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub model: String,
    pub representation: String,
    pub level: String,
    pub label_scope: String,
    pub mean_f1: Option<f64>,
    pub sd: Option<f64>,
    pub n_folds_used: usize,
    pub note: String,
}

impl BaselineRow {
    pub fn from_cv(r: &CvResult, label_scope: &str, note: &str) -> Self {
        BaselineRow {
            model: r.model.clone(),
            representation: r.representation.clone(),
            level: r.level.as_str().into(),
            label_scope: label_scope.into(),
            mean_f1: Some(r.mean_f1),
            sd: Some(r.sd),
            n_folds_used: r.folds.iter().filter(|f| f.f1.is_some()).count(),
            note: note.into(),
        }
    }

    /// A configuration that was not run, with the reason in `note`.
    pub fn skipped(model: &str, representation: &str, level: &str, label_scope: &str, note: &str) -> Self {
        BaselineRow {
            model: model.into(),
            representation: representation.into(),
            level: level.into(),
            label_scope: label_scope.into(),
            mean_f1: None,
            sd: None,
            n_folds_used: 0,
            note: note.into(),
        }
    }
}

pub fn write_baseline_csv(path: &Path, rows: &[BaselineRow]) -> Result<(), BaselineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BaselineError::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| BaselineError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
