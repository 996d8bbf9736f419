use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::lexical::tokenize_words;

/// Sparse row-major matrix; each row holds `(column, value)` sorted by column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub n_cols: usize,
    /// Rows with no known terms; they are all-zero.
    pub empty_rows: Vec<usize>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        let rows: Vec<_> = idx.iter().map(|&i| self.rows[i].clone()).collect();
        let empty_rows = rows.iter().enumerate().filter(|(_, r)| r.is_empty()).map(|(i, _)| i).collect();
        FeatureMatrix { rows, n_cols: self.n_cols, empty_rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfParams {
    /// Terms must occur in at least this many training documents.
    pub min_df: usize,
    #[serde(skip)]
    pub stopwords: BTreeSet<String>,
}

impl Default for TfidfParams {
    fn default() -> Self {
        TfidfParams { min_df: 1, stopwords: BTreeSet::new() }
    }
}

/// Fitted vocabulary and smoothed idf table:
/// `idf = ln((1 + N) / (1 + df)) + 1`, raw-count tf, L2-normalized rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfVectorizer {
    pub vocab: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub stopwords: BTreeSet<String>,
}

pub const TFIDF_FORMULA: &str = "tf=raw count; idf=ln((1+N)/(1+df))+1; rows L2-normalized";

fn terms(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
    tokenize_words(text).into_iter().filter(|w| !stopwords.contains(w)).collect()
}

impl TfidfVectorizer {
    pub fn fit<S: AsRef<str>>(texts: &[S], params: &TfidfParams) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            let distinct: BTreeSet<String> = terms(t.as_ref(), &params.stopwords).into_iter().collect();
            for w in distinct {
                *df.entry(w).or_insert(0) += 1;
            }
        }
        let n = texts.len() as f64;
        let kept: Vec<(String, usize)> = df.into_iter().filter(|(_, d)| *d >= params.min_df).collect();
        let idf = kept.iter().map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0).collect();
        let vocab = kept.into_iter().enumerate().map(|(i, (w, _))| (w, i)).collect();
        TfidfVectorizer { vocab, idf, stopwords: params.stopwords.clone() }
    }

    /// Raw term counts over the fitted vocabulary; unknown terms are ignored.
    pub fn counts<S: AsRef<str>>(&self, texts: &[S]) -> FeatureMatrix {
        let mut m = FeatureMatrix { rows: Vec::with_capacity(texts.len()), n_cols: self.vocab.len(), empty_rows: vec![] };
        for (i, t) in texts.iter().enumerate() {
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for w in terms(t.as_ref(), &self.stopwords) {
                if let Some(&j) = self.vocab.get(&w) {
                    *row.entry(j).or_insert(0.0) += 1.0;
                }
            }
            if row.is_empty() {
                m.empty_rows.push(i);
            }
            m.rows.push(row.into_iter().collect());
        }
        m
    }

    pub fn transform<S: AsRef<str>>(&self, texts: &[S]) -> FeatureMatrix {
        let mut m = self.counts(texts);
        for row in &mut m.rows {
            row.iter_mut().for_each(|(j, v)| *v *= self.idf[*j]);
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|(_, v)| *v /= norm);
            }
        }
        m
    }

    pub fn fit_transform<S: AsRef<str>>(texts: &[S], params: &TfidfParams) -> (FeatureMatrix, Self) {
        let v = TfidfVectorizer::fit(texts, params);
        (v.transform(texts), v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let (m, v) = TfidfVectorizer::fit_transform(&["a b", "a b", "a c"], &TfidfParams::default());
        assert_eq!(m.rows[0], m.rows[1]);
        // "a" is in every document
        assert_eq!(v.idf[v.vocab["a"]], 1.0);
        assert!((v.idf[v.vocab["c"]] - ((4.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
        for i in 0..3 {
            assert!((m.row_norm(i) - 1.0).abs() < 1e-9);
        }
        let (m, _) = TfidfVectorizer::fit_transform(&["solo"], &TfidfParams::default());
        assert_eq!(m.rows[0], vec![(0, 1.0)]);
    }

    #[test]
    fn unknown_and_empty() {
        let v = TfidfVectorizer::fit(&["a b"], &TfidfParams::default());
        let m = v.transform(&["zzz", "a zzz"]);
        assert_eq!(m.empty_rows, vec![0]);
        assert!(m.rows[0].is_empty());
        assert_eq!(m.rows[1], vec![(v.vocab["a"], 1.0)]);
    }

    proptest::proptest! {
        #[test]
        fn rows_are_unit_norm(docs in proptest::collection::vec("[a-f]{1,2}( [a-f]{1,2}){0,8}", 1..20)) {
            let (m, _) = TfidfVectorizer::fit_transform(&docs, &TfidfParams::default());
            for i in 0..m.n_rows() {
                if !m.rows[i].is_empty() {
                    proptest::prop_assert!((m.row_norm(i) - 1.0).abs() < 1e-9);
                }
                proptest::prop_assert!(m.rows[i].iter().all(|(_, v)| *v >= 0.0));
            }
        }
    }
}
