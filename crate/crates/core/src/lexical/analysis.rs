use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{log_odds_z, partisan_ratio, quantile_bins, DirichletPrior};
use super::vocab::{count_terms, text_terms, vocab_from_docs, Vocabulary, DEFAULT_MIN_COUNT};
use super::{default_stopwords, LexicalError};
use crate::aggregate::Scored;
use crate::corpus::{PartyLabel, TextUnit};
use crate::metrics::ConfusionMatrix;

#[derive(Debug, Clone)]
pub struct LexicalConfig {
    pub min_count: u64,
    pub stopwords: BTreeSet<String>,
    pub bigrams: bool,
    /// Words per quintile in the cloud export.
    pub top_n: usize,
    /// Texts a word needs before its F1 is considered supported.
    pub word_f1_min_support: usize,
    pub curve_quantiles: usize,
}

impl Default for LexicalConfig {
    fn default() -> Self {
        LexicalConfig {
            min_count: DEFAULT_MIN_COUNT,
            stopwords: default_stopwords(),
            bigrams: false,
            top_n: 100,
            word_f1_min_support: 5,
            curve_quantiles: 15,
        }
    }
}

/// For each vocabulary token, the indices of the documents containing it.
fn presence(vocab: &Vocabulary, docs: &[Vec<String>]) -> BTreeMap<String, Vec<usize>> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, doc) in docs.iter().enumerate() {
        let distinct: BTreeSet<&String> = doc.iter().filter(|t| vocab.contains(t)).collect();
        for t in distinct {
            out.entry(t.clone()).or_default().push(i);
        }
    }
    out
}

fn confidences<P: Scored>(
    present: &BTreeMap<String, Vec<usize>>,
    texts: &[TextUnit],
    preds: &HashMap<String, P>,
) -> BTreeMap<String, (f64, usize)> {
    let mut out = BTreeMap::new();
    for (token, idx) in present {
        let cs: Vec<u8> = idx.iter().filter_map(|&i| preds.get(&texts[i].text_id)).map(|p| p.confidence()).collect();
        if cs.is_empty() {
            log::warn!("token {token:?} occurs in no predicted text; excluded");
            continue;
        }
        let mean = cs.iter().map(|&c| f64::from(c)).sum::<f64>() / cs.len() as f64;
        out.insert(token.clone(), (mean, cs.len()));
    }
    out
}

/// Mean confidence of the predicted texts containing each token, counting
/// each text once however often the token occurs in it.
pub fn word_confidence<P: Scored>(
    vocab: &Vocabulary,
    texts: &[TextUnit],
    preds: &HashMap<String, P>,
) -> BTreeMap<String, (f64, usize)> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| vocab.terms(&t.body)).collect();
    confidences(&presence(vocab, &docs), texts, preds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordF1 {
    pub f1: f64,
    pub n: usize,
    /// Too few texts, or only one gold class among them.
    pub low_support: bool,
}

fn f1s<P: Scored>(
    present: &BTreeMap<String, Vec<usize>>,
    texts: &[TextUnit],
    preds: &HashMap<String, P>,
    gold: &HashMap<String, PartyLabel>,
    min_support: usize,
) -> BTreeMap<String, WordF1> {
    let mut out = BTreeMap::new();
    for (token, idx) in present {
        let mut m = ConfusionMatrix::default();
        for &i in idx {
            let t = &texts[i];
            if let (Some(p), Some(&g)) = (preds.get(&t.text_id), gold.get(&t.user_id)) {
                m.record(g, p.party());
            }
        }
        let n = m.total() as usize;
        if n == 0 {
            continue;
        }
        let one_class = m.counts[0].iter().sum::<u64>() == 0 || m.counts[1].iter().sum::<u64>() == 0;
        out.insert(token.clone(), WordF1 { f1: m.macro_f1(), n, low_support: n < min_support || one_class });
    }
    out
}

/// Macro F1 over the texts containing each token, scored against the
/// author's gold party.
pub fn word_f1<P: Scored>(
    vocab: &Vocabulary,
    texts: &[TextUnit],
    preds: &HashMap<String, P>,
    gold: &HashMap<String, PartyLabel>,
    min_support: usize,
) -> BTreeMap<String, WordF1> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| vocab.terms(&t.body)).collect();
    f1s(&presence(vocab, &docs), texts, preds, gold, min_support)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordStats {
    pub token: String,
    pub count_in_category: u64,
    pub category_total: u64,
    pub count_rep: u64,
    pub count_dem: u64,
    pub mean_confidence: f64,
    pub quintile: usize,
    pub log_odds: f64,
    pub se: f64,
    pub z: f64,
    pub partisan_ratio: f64,
    pub n_texts_containing: usize,
    pub word_f1: Option<f64>,
    pub word_f1_n: usize,
    pub low_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub token: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryAnalysis {
    pub label: String,
    pub n_texts: usize,
    pub vocab_size: usize,
    /// Sorted by token.
    pub stats: Vec<WordStats>,
    pub excluded: Vec<Exclusion>,
}

/// Full word-level analysis of `focal` texts against a `background`
/// corpus that supplies the Dirichlet prior.
///
/// Vocabulary words with no background occurrences, or occurring in no
/// predicted text, are excluded and listed in `excluded`.
pub fn analyze_category<P: Scored>(
    label: &str,
    focal: &[TextUnit],
    background: &[TextUnit],
    preds: &HashMap<String, P>,
    gold: &HashMap<String, PartyLabel>,
    cfg: &LexicalConfig,
) -> Result<CategoryAnalysis, LexicalError> {
    if focal.is_empty() {
        return Err(LexicalError::NoTexts);
    }
    let terms = |t: &TextUnit| text_terms(&t.body, &cfg.stopwords, cfg.bigrams);
    let docs: Vec<Vec<String>> = focal.iter().map(terms).collect();
    let vocab = vocab_from_docs(&docs, &cfg.stopwords, cfg.min_count, cfg.bigrams);
    let counts = count_terms(&docs);
    let n_a: u64 = counts.values().sum();
    let bg_docs: Vec<Vec<String>> = background.iter().map(terms).collect();
    let prior = DirichletPrior::from_counts(&count_terms(&bg_docs));

    let mut excluded = Vec::new();
    let present = presence(&vocab, &docs);
    let conf = confidences(&present, focal, preds);
    let mut kept = Vec::new();
    for token in &vocab.tokens {
        if prior.alpha(token) <= 0.0 {
            log::debug!("{label}: token {token:?} has no background occurrences; excluded");
            excluded.push(Exclusion { token: token.clone(), reason: "zero_prior".into() });
        } else if !conf.contains_key(token) {
            excluded.push(Exclusion { token: token.clone(), reason: "no_predictions".into() });
        } else {
            kept.push(token.clone());
        }
    }
    let zero_prior = excluded.iter().filter(|e| e.reason == "zero_prior").count();
    if zero_prior > 0 {
        log::warn!("{label}: {zero_prior} tokens have no background occurrences; excluded");
    }

    let scores: BTreeMap<String, f64> = kept.iter().map(|t| (t.clone(), conf[t].0)).collect();
    let quintiles = if kept.is_empty() { BTreeMap::new() } else { quantile_bins(&scores, 5)? };
    let lo = log_odds_z(&kept, &counts, n_a, &prior)?;

    let mut by_party = [BTreeMap::new(), BTreeMap::new()];
    for (doc, text) in docs.iter().zip(focal) {
        if let Some(g) = gold.get(&text.user_id) {
            for t in doc {
                *by_party[g.index()].entry(t.clone()).or_insert(0u64) += 1;
            }
        }
    }
    let ratio = partisan_ratio(&by_party[PartyLabel::Republican.index()], &by_party[PartyLabel::Democratic.index()])?;
    let wf1 = f1s(&present, focal, preds, gold, cfg.word_f1_min_support);

    let stats = kept
        .iter()
        .map(|t| {
            let f = wf1.get(t);
            WordStats {
                token: t.clone(),
                count_in_category: counts[t],
                category_total: n_a,
                count_rep: by_party[0].get(t).copied().unwrap_or(0),
                count_dem: by_party[1].get(t).copied().unwrap_or(0),
                mean_confidence: conf[t].0,
                quintile: quintiles[t],
                log_odds: lo[t].log_odds,
                se: lo[t].se,
                z: lo[t].z,
                partisan_ratio: ratio.get(t).copied().unwrap_or(f64::NAN),
                n_texts_containing: conf[t].1,
                word_f1: f.map(|w| w.f1),
                word_f1_n: f.map_or(0, |w| w.n),
                low_support: f.is_none_or(|w| w.low_support),
            }
        })
        .collect();
    Ok(CategoryAnalysis { label: label.to_string(), n_texts: focal.len(), vocab_size: vocab.len(), stats, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudEntry {
    pub token: String,
    /// Size channel.
    pub z: f64,
    /// Color channel: partisan ratio.
    pub f: f64,
    pub confidence: f64,
    pub quintile: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCloud {
    pub category: String,
    /// `Q1`..`Q5`, each sorted by descending z.
    pub quintiles: BTreeMap<String, Vec<CloudEntry>>,
}

/// Up to `top_n` words of highest z per confidence quintile.
pub fn wordcloud_export(category: &str, stats: &[WordStats], top_n: usize) -> WordCloud {
    let mut quintiles: BTreeMap<String, Vec<CloudEntry>> = (1..=5).map(|q| (format!("Q{q}"), Vec::new())).collect();
    for s in stats {
        quintiles.entry(format!("Q{}", s.quintile)).or_default().push(CloudEntry {
            token: s.token.clone(),
            z: s.z,
            f: s.partisan_ratio,
            confidence: s.mean_confidence,
            quintile: s.quintile,
        });
    }
    for entries in quintiles.values_mut() {
        entries.sort_by(|a, b| b.z.total_cmp(&a.z).then_with(|| a.token.cmp(&b.token)));
        entries.truncate(top_n);
    }
    WordCloud { category: category.to_string(), quintiles }
}

impl WordCloud {
    pub fn write(&self, path: &Path) -> Result<(), LexicalError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| LexicalError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| LexicalError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, LexicalError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexicalError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LexicalError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub quantile: usize,
    pub n_tokens: usize,
    pub mean_confidence: f64,
    pub mean_f1: f64,
}

/// Mean word F1 per equal-frequency confidence quantile.
pub fn quantile_f1_curve(stats: &[WordStats], k: usize) -> Result<Vec<QuantilePoint>, LexicalError> {
    let scored: Vec<&WordStats> = stats.iter().filter(|s| s.word_f1.is_some()).collect();
    let conf: BTreeMap<String, f64> = scored.iter().map(|s| (s.token.clone(), s.mean_confidence)).collect();
    let bins = quantile_bins(&conf, k)?;
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); k];
    for s in scored {
        let a = &mut acc[bins[&s.token] - 1];
        a.0 += 1;
        a.1 += s.mean_confidence;
        a.2 += s.word_f1.expect("filtered");
    }
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(i, (n, c, f))| QuantilePoint { quantile: i + 1, n_tokens: n, mean_confidence: c / n as f64, mean_f1: f / n as f64 })
        .collect())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), LexicalError> {
    let io = |e: &dyn std::fmt::Display| LexicalError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))
}

pub fn write_wordstats_csv(path: &Path, stats: &[WordStats]) -> Result<(), LexicalError> {
    write_rows(path, stats)
}

pub fn write_quantile_csv(path: &Path, points: &[QuantilePoint]) -> Result<(), LexicalError> {
    write_rows(path, points)
}
