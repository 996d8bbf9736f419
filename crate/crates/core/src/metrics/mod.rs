//! Evaluation statistics: macro F1, grouped F1, bootstrap standard errors
//! and paired tests, Pearson correlation and annotator agreement.

mod agreement;
mod bootstrap;
mod correlation;
mod f1;
mod report;

use thiserror::Error;

pub use agreement::{cohen_kappa, fleiss_kappa, majority_vote_accuracy};
pub use bootstrap::{bootstrap, bootstrap_paired_test, bootstrap_se, BootstrapResult, DEFAULT_REPLICATES};
pub use f1::{grouped_f1, macro_f1, ConfusionMatrix, GroupScore};
pub use correlation::pearson_r;
pub use report::{read_eval_json, write_eval_csv, write_eval_json, EvalReport, EvalRow};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{0} needs at least {1} items")]
    TooFew(&'static str, usize),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("ragged rating matrix: item {item} has {got} ratings, expected {expected}")]
    Ragged { item: usize, got: usize, expected: usize },
    #[error("n_replicates must be at least 1")]
    NoReplicates,
    #[error("report i/o: {0}")]
    Io(String),
}
