//! Supervised reference classifiers and the political-content sensitivity
//! filter.

mod cv;
mod gaussian;
mod logistic;
mod nb;
mod political;
mod report;
mod sensitivity;
mod tfidf;

pub use cv::{cross_validate, fold_vectorizer, stratified_folds, CvLevel, CvResult, Features, FoldResult, FoldSplit, Model, ModelSpec};
pub use gaussian::GaussianNb;
pub use logistic::{loss_and_grad, Logistic, LogisticParams};
pub use nb::MultinomialNb;
pub use political::{select_political_content_classifier, CandidateScores, train_political_content_classifier, PoliticalClassifier, PoliticalSplit, MODEL_MAGIC, MODEL_VERSION};
pub use report::{write_baseline_csv, BaselineRow};
pub use sensitivity::{sensitivity_filter, RemovalStats, SensitivityOutcome, TextClassifier};
pub use tfidf::{FeatureMatrix, TfidfParams, TfidfVectorizer, TFIDF_FORMULA};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BaselineError {
    #[error("{0} feature rows but {1} labels")]
    Shape(usize, usize),
    #[error("class {0} is absent from the training data")]
    MissingClass(usize),
    #[error("multinomial model needs nonnegative features")]
    NegativeFeature,
    #[error("features must be finite")]
    NonFinite,
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("every fold was flagged; no mean F1 available")]
    NoUsableFolds,
    #[error("empty input")]
    Empty,
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for BaselineError {
    fn from(e: std::io::Error) -> Self {
        BaselineError::Io(e.to_string())
    }
}
