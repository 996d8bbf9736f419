use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tokenize_words;

pub const DEFAULT_MIN_COUNT: u64 = 10;

/// Analysis terms of one text: non-stopword unigrams, plus adjacent
/// non-stopword pairs joined by a space when `bigrams` is set.
pub fn text_terms(text: &str, stopwords: &BTreeSet<String>, bigrams: bool) -> Vec<String> {
    let words = tokenize_words(text);
    let mut out: Vec<String> = words.iter().filter(|w| !stopwords.contains(*w)).cloned().collect();
    if bigrams {
        for pair in words.windows(2) {
            if !stopwords.contains(&pair[0]) && !stopwords.contains(&pair[1]) {
                out.push(format!("{} {}", pair[0], pair[1]));
            }
        }
    }
    out
}

/// Occurrence counts over a sequence of term lists.
pub fn count_terms<'a>(docs: impl IntoIterator<Item = &'a Vec<String>>) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for doc in docs {
        for t in doc {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Sorted tokens meeting the count threshold.
    pub tokens: Vec<String>,
    pub counts: BTreeMap<String, u64>,
    pub min_count: u64,
    pub stopwords: BTreeSet<String>,
    /// Whether adjacent-pair terms were counted.
    pub bigrams: bool,
}

impl Vocabulary {
    pub fn contains(&self, token: &str) -> bool {
        self.tokens.binary_search_by(|t| t.as_str().cmp(token)).is_ok()
    }

    /// This vocabulary's analysis terms of `text`.
    pub fn terms(&self, text: &str) -> Vec<String> {
        text_terms(text, &self.stopwords, self.bigrams)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Unigram vocabulary of `texts` with at least `min_count` occurrences.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], stopwords: &BTreeSet<String>, min_count: u64) -> Vocabulary {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| text_terms(t.as_ref(), stopwords, false)).collect();
    vocab_from_docs(&docs, stopwords, min_count, false)
}

pub(crate) fn vocab_from_docs(docs: &[Vec<String>], stopwords: &BTreeSet<String>, min_count: u64, bigrams: bool) -> Vocabulary {
    let counts: BTreeMap<String, u64> = count_terms(docs).into_iter().filter(|(_, c)| *c >= min_count).collect();
    Vocabulary { tokens: counts.keys().cloned().collect(), counts, min_count, stopwords: stopwords.clone(), bigrams }
}
