//! Corpus loading, validation and preprocessing.

mod fetch;
mod filter;
mod load;
mod reddit;
mod tokenize;
mod types;

use std::path::Path;

use thiserror::Error;

pub use fetch::{FetchError, FetchedListing, ListingFetcher, MAX_PAGE};
pub use filter::{
    filter_by_token_length, filter_users_by_mean_score, undersample_active_users, LengthFilterOutcome, Reject,
    DEFAULT_MAX_TOKENS, DEFAULT_MIN_TOKENS,
};
pub use load::{
    ddo_text_id, load_corpus, load_titles, read_jsonl, write_corpus, write_jsonl, Corpus, ROUND_SEPARATOR,
    TEXTS_FILE, USERS_FILE,
};
pub use reddit::{
    build_subreddit_texts, default_seed_labels, label_users_from_seed_comments, normalize_subreddit,
    SeedLabelling, SubredditTexts, COMMENT_SEPARATOR,
};
pub use tokenize::{tokenizer_by_name, Tokenizer, TokenizerError, WhitespaceTokenizer};
#[cfg(feature = "tiktoken")]
pub use tokenize::BpeTokenizer;
pub use types::{Category, CorpusManifest, PartyLabel, RawComment, Source, TextLine, TextUnit, UserRecord};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}, field `{field}`: {message}")]
    Malformed { file: String, line: usize, field: String, message: String },
    #[error("line {line}: unknown category {name:?}")]
    UnknownCategory { line: usize, name: String },
    #[error("duplicate text_id {0:?}")]
    DuplicateTextId(String),
    #[error("duplicate user_id {0:?}")]
    DuplicateUser(String),
    #[error("line {line}: text refers to unknown user {user_id:?}")]
    UnknownUser { line: usize, user_id: String },
    #[error("user {user_id:?} and subreddit {group_key:?} already have a unit")]
    DuplicateUnit { user_id: String, group_key: String },
    #[error("debate {group_key:?}: category differs between arguments (line {line})")]
    InconsistentCategory { group_key: String, line: usize },
    #[error("user {user_id:?} is not a {} user", expected.as_str())]
    SourceMismatch { user_id: String, expected: Source },
    #[error("user {0:?} has no mean_comment_score")]
    MissingScore(String),
    #[error("token bounds must satisfy max > min (got min={min}, max={max})")]
    InvalidBounds { min: usize, max: usize },
    #[error("undersampling cap must be at least 1")]
    InvalidCap,
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.display().to_string(), source }
    }
}
