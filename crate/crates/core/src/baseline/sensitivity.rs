use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::PoliticalClassifier;
use crate::corpus::TextUnit;

/// Anything that can flag a text as explicitly political.
pub trait TextClassifier {
    fn is_political(&self, text: &str) -> bool;
}

impl TextClassifier for PoliticalClassifier {
    fn is_political(&self, text: &str) -> bool {
        self.predict(text)
    }
}

impl<F: Fn(&str) -> bool> TextClassifier for F {
    fn is_political(&self, text: &str) -> bool {
        self(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalStats {
    pub n_input: usize,
    pub n_removed: usize,
    pub removed_fraction: f64,
    /// Mean model confidence over texts with a known confidence.
    pub mean_confidence_removed: Option<f64>,
    pub mean_confidence_retained: Option<f64>,
    /// Counts of confidence 1..=5.
    pub confidence_hist_removed: [u64; 5],
    pub confidence_hist_retained: [u64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityOutcome {
    pub retained: Vec<TextUnit>,
    pub removed: Vec<TextUnit>,
    pub stats: RemovalStats,
}

fn hist_mean(h: &[u64; 5]) -> Option<f64> {
    let n: u64 = h.iter().sum();
    (n > 0).then(|| h.iter().enumerate().map(|(i, c)| (i as u64 + 1) * c).sum::<u64>() as f64 / n as f64)
}

/// Partitions general texts by the classifier verdict. `confidence` maps
/// text ids to the LLM's 1..=5 confidence for the before/after comparison;
/// texts without one are partitioned but left out of the statistics.
pub fn sensitivity_filter(
    general_texts: &[TextUnit],
    classifier: &dyn TextClassifier,
    confidence: &HashMap<String, u8>,
) -> SensitivityOutcome {
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    let mut hist_removed = [0u64; 5];
    let mut hist_retained = [0u64; 5];
    for t in general_texts {
        let political = classifier.is_political(&t.body);
        if let Some(&c) = confidence.get(&t.text_id).filter(|c| (1..=5).contains(*c)) {
            let h = if political { &mut hist_removed } else { &mut hist_retained };
            h[c as usize - 1] += 1;
        }
        if political {
            removed.push(t.clone());
        } else {
            retained.push(t.clone());
        }
    }
    let n_input = general_texts.len();
    let stats = RemovalStats {
        n_input,
        n_removed: removed.len(),
        removed_fraction: if n_input == 0 { 0.0 } else { removed.len() as f64 / n_input as f64 },
        mean_confidence_removed: hist_mean(&hist_removed),
        mean_confidence_retained: hist_mean(&hist_retained),
        confidence_hist_removed: hist_removed,
        confidence_hist_retained: hist_retained,
    };
    SensitivityOutcome { retained, removed, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Category;

    fn unit(id: &str, body: &str) -> TextUnit {
        TextUnit {
            text_id: id.into(),
            user_id: "u".into(),
            category: Category::Sports,
            group_key: "g".into(),
            body: body.into(),
            token_count: 1,
            created_at: None,
        }
    }

    #[test]
    fn identity_when_nothing_rejected() {
        let texts = vec![unit("a", "x"), unit("b", "y")];
        let out = sensitivity_filter(&texts, &|_: &str| false, &HashMap::new());
        assert_eq!(out.retained, texts);
        assert!(out.removed.is_empty());
        assert_eq!(out.stats.removed_fraction, 0.0);
        assert_eq!(out.stats.mean_confidence_removed, None);
    }

    #[test]
    fn partition_and_stats() {
        let texts = vec![unit("a", "vote now"), unit("b", "nice goal"), unit("c", "vote later"), unit("d", "ok")];
        let conf: HashMap<String, u8> = [("a", 5), ("b", 2), ("c", 4), ("d", 3)].iter().map(|&(k, v)| (k.to_string(), v)).collect();
        let out = sensitivity_filter(&texts, &|t: &str| t.contains("vote"), &conf);
        assert_eq!(out.removed.len(), 2);
        assert_eq!(out.retained.len(), 2);
        assert_eq!(out.stats.mean_confidence_removed, Some(4.5));
        assert_eq!(out.stats.mean_confidence_retained, Some(2.5));
        assert_eq!(out.stats.confidence_hist_removed, [0, 0, 0, 1, 1]);
    }
}
