//! Word-level politicization statistics: per-word model confidence,
//! Dirichlet-prior log-odds, partisan frequency ratio, per-word F1 and
//! word-cloud export.

mod analysis;
mod stats;
mod vocab;

use std::collections::BTreeSet;

use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

pub use analysis::{
    analyze_category, quantile_f1_curve, word_confidence, word_f1, wordcloud_export, write_quantile_csv,
    write_wordstats_csv, CategoryAnalysis, CloudEntry, Exclusion, LexicalConfig, QuantilePoint, WordCloud,
    WordF1, WordStats,
};
pub use stats::{log_odds_z, partisan_ratio, quantile_bins, DirichletPrior, LogOdds};
pub use vocab::{build_vocab, count_terms, text_terms, Vocabulary, DEFAULT_MIN_COUNT};

const STOPWORDS_EN: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("need at least {bins} tokens for {bins} bins, got {tokens}")]
    TooFewTokens { tokens: usize, bins: usize },
    #[error("prior pseudo-count for {0:?} is zero")]
    ZeroPrior(String),
    #[error("token {token:?}: category count {count} exceeds total {total}")]
    CountExceedsTotal { token: String, count: u64, total: u64 },
    #[error("party {0} has no tokens")]
    EmptyParty(&'static str),
    #[error("no texts to analyze")]
    NoTexts,
    #[error("report i/o: {0}")]
    Io(String),
}

/// Lowercased Unicode words of `text`; punctuation is dropped.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

/// The bundled English stop-word list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(STOPWORDS_EN)
}

/// One word per line; `#` starts a comment.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}
