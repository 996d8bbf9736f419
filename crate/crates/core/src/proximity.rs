//! Semantic and social proximity of each category to Politics.
//!
//! Semantic proximity is the cosine between category-mean embeddings of
//! texts (content) or of group titles (title). Social proximity is the
//! Jaccard overlap and normalized PMI of the categories' user sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{embed_texts, EmbedError, EmbeddingCache, EmbeddingProvider, EmbeddingVector};
use crate::corpus::{Category, TextUnit};
use crate::metrics::pearson_r;

#[derive(Debug, Error)]
pub enum ProximityError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("category {0} has no users in the universe")]
    EmptyCategory(String),
    #[error("user {0} is outside the NPMI universe")]
    OutsideUniverse(String),
    #[error("no Politics profile")]
    MissingPolitics,
    #[error("{kind} embedding missing for {category}")]
    MissingMean { category: Category, kind: &'static str },
    #[error("report i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Content,
    Title,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryProfile {
    pub category: Category,
    pub user_set: BTreeSet<String>,
    pub mean_content_embedding: EmbeddingVector,
    /// `None` when no group in the category has a title.
    pub mean_title_embedding: Option<EmbeddingVector>,
    pub n_texts: usize,
    /// Group keys whose title was missing.
    pub missing_titles: Vec<String>,
}

/// Per-category mean embeddings and user sets. Each distinct group title
/// contributes once to its category's title mean.
pub fn build_profiles(
    texts: &[TextUnit],
    titles: &HashMap<String, String>,
    embedder: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
) -> Result<BTreeMap<Category, CategoryProfile>, ProximityError> {
    let mut by_cat: BTreeMap<Category, Vec<&TextUnit>> = BTreeMap::new();
    for t in texts {
        by_cat.entry(t.category).or_default().push(t);
    }
    let mut out = BTreeMap::new();
    for (category, members) in by_cat {
        let bodies: Vec<&str> = members.iter().map(|t| t.body.as_str()).collect();
        let vectors = embed_texts(&bodies, embedder, cache)?;
        let mean_content_embedding =
            EmbeddingVector::mean(vectors.iter().map(|v| v.as_ref())).expect("category has texts of one dimension");

        let groups: BTreeSet<&str> = members.iter().map(|t| t.group_key.as_str()).collect();
        let mut title_texts = Vec::new();
        let mut missing_titles = Vec::new();
        for g in groups {
            match titles.get(g) {
                Some(title) if !title.trim().is_empty() => title_texts.push(title.as_str()),
                _ => missing_titles.push(g.to_string()),
            }
        }
        if !missing_titles.is_empty() {
            log::warn!("{category}: {} group(s) without a title were skipped", missing_titles.len());
        }
        let title_vectors = embed_texts(&title_texts, embedder, cache)?;
        let mean_title_embedding = EmbeddingVector::mean(title_vectors.iter().map(|v| v.as_ref()));

        out.insert(
            category,
            CategoryProfile {
                category,
                user_set: members.iter().map(|t| t.user_id.clone()).collect(),
                mean_content_embedding,
                mean_title_embedding,
                n_texts: members.len(),
                missing_titles,
            },
        );
    }
    Ok(out)
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, ProximityError> {
    if a.dim() != b.dim() {
        return Err(ProximityError::Dimension(a.dim(), b.dim()));
    }
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(ProximityError::ZeroVector);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm() * b.norm())).clamp(-1.0, 1.0))
}

pub fn embedding_similarity(a: &CategoryProfile, b: &CategoryProfile, kind: SimilarityKind) -> Result<f64, ProximityError> {
    match kind {
        SimilarityKind::Content => cosine(&a.mean_content_embedding, &b.mean_content_embedding),
        SimilarityKind::Title => {
            let pick = |p: &'_ CategoryProfile| {
                p.mean_title_embedding.clone().ok_or(ProximityError::MissingMean { category: p.category, kind: "title" })
            };
            cosine(&pick(a)?, &pick(b)?)
        }
    }
}

/// Jaccard overlap of two user sets; two empty sets give 0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn user_jaccard(a: &CategoryProfile, b: &CategoryProfile) -> f64 {
    jaccard(&a.user_set, &b.user_set)
}

/// NPMI from probabilities with a caller-supplied logarithm.
fn npmi_from(p_a: f64, p_b: f64, p_ab: f64, log: impl Fn(f64) -> f64) -> f64 {
    if p_ab == 0.0 {
        return -1.0;
    }
    if p_ab == 1.0 {
        return 1.0;
    }
    let pmi = log(p_ab / (p_a * p_b));
    (-pmi / log(p_ab)).clamp(-1.0, 1.0)
}

/// Normalized PMI of co-participation over `universe`: never co-occurring
/// gives -1 and perfect co-occurrence gives +1.
pub fn npmi(a: &BTreeSet<String>, b: &BTreeSet<String>, universe: &BTreeSet<String>) -> Result<f64, ProximityError> {
    if let Some(u) = a.iter().chain(b).find(|u| !universe.contains(*u)) {
        return Err(ProximityError::OutsideUniverse(u.clone()));
    }
    let n = universe.len() as f64;
    if a.is_empty() || b.is_empty() {
        return Err(ProximityError::EmptyCategory(if a.is_empty() { "A" } else { "B" }.into()));
    }
    let p_ab = a.intersection(b).count() as f64 / n;
    Ok(npmi_from(a.len() as f64 / n, b.len() as f64 / n, p_ab, f64::ln))
}

pub fn user_npmi(a: &CategoryProfile, b: &CategoryProfile, universe: &BTreeSet<String>) -> Result<f64, ProximityError> {
    npmi(&a.user_set, &b.user_set, universe).map_err(|e| match e {
        ProximityError::EmptyCategory(which) => {
            ProximityError::EmptyCategory(if which == "A" { a.category } else { b.category }.to_string())
        }
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityRow {
    pub category: Category,
    pub sim_content: f64,
    pub sim_title: Option<f64>,
    pub jaccard: f64,
    pub npmi: f64,
    pub f1: Option<f64>,
    pub n_texts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
    /// Why the correlation was not computed.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityReport {
    pub rows: Vec<ProximityRow>,
    /// Keyed by column: sim_content, sim_title, jaccard, npmi.
    pub correlations: BTreeMap<String, CorrelationSummary>,
}

pub const SIMILARITY_COLUMNS: [&str; 4] = ["sim_content", "sim_title", "jaccard", "npmi"];

fn correlate(pairs: &[(f64, f64)]) -> CorrelationSummary {
    let n = pairs.len();
    if n < 3 {
        return CorrelationSummary { r: None, p: None, n, flag: Some("fewer than 3 categories".into()) };
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    match pearson_r(&x, &y) {
        Ok((r, p)) => CorrelationSummary { r: Some(r), p: Some(p), n, flag: None },
        Err(e) => CorrelationSummary { r: None, p: None, n, flag: Some(e.to_string()) },
    }
}

/// Similarity of every non-Politics category to Politics, and the Pearson
/// correlation of each similarity column with per-category F1.
pub fn proximity_report(
    profiles: &BTreeMap<Category, CategoryProfile>,
    f1_by_category: &BTreeMap<Category, f64>,
    universe: &BTreeSet<String>,
) -> Result<ProximityReport, ProximityError> {
    let politics = profiles.get(&Category::Politics).ok_or(ProximityError::MissingPolitics)?;
    let mut rows = Vec::new();
    for (cat, p) in profiles {
        if cat.is_political() {
            continue;
        }
        let sim_title = match (&p.mean_title_embedding, &politics.mean_title_embedding) {
            (Some(a), Some(b)) => Some(cosine(a, b)?),
            _ => None,
        };
        rows.push(ProximityRow {
            category: *cat,
            sim_content: embedding_similarity(p, politics, SimilarityKind::Content)?,
            sim_title,
            jaccard: user_jaccard(p, politics),
            npmi: user_npmi(p, politics, universe)?,
            f1: f1_by_category.get(cat).copied(),
            n_texts: p.n_texts,
        });
    }
    let mut correlations = BTreeMap::new();
    for col in SIMILARITY_COLUMNS {
        let pairs: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| {
                let x = match col {
                    "sim_content" => Some(r.sim_content),
                    "sim_title" => r.sim_title,
                    "jaccard" => Some(r.jaccard),
                    _ => Some(r.npmi),
                };
                Some((x?, r.f1?))
            })
            .collect();
        correlations.insert(col.to_string(), correlate(&pairs));
    }
    Ok(ProximityReport { rows, correlations })
}

impl ProximityReport {
    /// `proximity.csv`: category, sim_content, sim_title, jaccard, npmi, f1, n_texts.
    pub fn write_csv(&self, path: &Path) -> Result<(), ProximityError> {
        let io = |e: &dyn std::fmt::Display| ProximityError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| io(&e))?;
        }
        w.flush().map_err(|e| io(&e))
    }

    pub fn write_summary(&self, path: &Path) -> Result<(), ProximityError> {
        let text = serde_json::to_string_pretty(&self.correlations).map_err(|e| ProximityError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| ProximityError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[u32]) -> BTreeSet<String> {
        xs.iter().map(|x| format!("u{x}")).collect()
    }

    fn universe(n: u32) -> BTreeSet<String> {
        (0..n).map(|x| format!("u{x}")).collect()
    }

    struct Table(HashMap<&'static str, Vec<f64>>);
    impl EmbeddingProvider for Table {
        fn dim(&self) -> usize {
            2
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
            self.0.get(text).cloned().ok_or_else(|| EmbedError::Missing(text.to_string()))
        }
    }

    fn unit(id: &str, user: &str, cat: Category, group: &str, body: &str) -> TextUnit {
        TextUnit {
            text_id: id.into(),
            user_id: user.into(),
            category: cat,
            group_key: group.into(),
            body: body.into(),
            token_count: 1,
            created_at: None,
        }
    }

    #[test]
    fn profile_means() {
        let provider = Table(HashMap::from([("x", vec![1.0, 0.0]), ("y", vec![0.0, 1.0]), ("T", vec![3.0, 4.0])]));
        let texts = vec![
            unit("1", "a", Category::Arts, "g1", "x"),
            unit("2", "b", Category::Arts, "g2", "y"),
            unit("3", "a", Category::Cars, "g3", "x"),
        ];
        let titles = HashMap::from([("g1".to_string(), "T".to_string())]);
        let profiles = build_profiles(&texts, &titles, &provider, &EmbeddingCache::new()).unwrap();
        assert_eq!(profiles[&Category::Arts].mean_content_embedding.values(), &[0.5, 0.5]);
        assert_eq!(profiles[&Category::Cars].mean_content_embedding.values(), &[1.0, 0.0]);
        assert_eq!(profiles[&Category::Arts].mean_title_embedding.as_ref().unwrap().values(), &[3.0, 4.0]);
        assert_eq!(profiles[&Category::Arts].missing_titles, vec!["g2".to_string()]);
        assert!(profiles[&Category::Cars].mean_title_embedding.is_none());
        assert_eq!(profiles[&Category::Arts].user_set, ["a", "b"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn cosine_examples() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]);
        let b = EmbeddingVector::new(vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&a, &EmbeddingVector::new(vec![0.0, 3.0])).unwrap(), 0.0);
        assert!((cosine(&a, &b).unwrap() - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!(matches!(cosine(&a, &EmbeddingVector::new(vec![0.0, 0.0])), Err(ProximityError::ZeroVector)));
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&[1, 2]), &set(&[1, 2])), 1.0);
        assert_eq!(jaccard(&set(&[1]), &set(&[2])), 0.0);
        assert_eq!(jaccard(&set(&[1, 2, 3]), &set(&[2, 3, 4])), 0.5);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn npmi_examples() {
        let u = universe(10);
        assert_eq!(npmi(&set(&[0, 1, 2, 3, 4]), &set(&[0, 1, 2, 3, 4]), &u).unwrap(), 1.0);
        assert_eq!(npmi(&set(&[0, 1]), &set(&[5, 6]), &u).unwrap(), -1.0);
        // 4x4 grid: A = first two rows, B = first two columns
        let grid = universe(16);
        let a: BTreeSet<String> = (0..8).map(|x| format!("u{x}")).collect();
        let b: BTreeSet<String> = (0..16).filter(|x| x % 4 < 2).map(|x| format!("u{x}")).collect();
        assert!(npmi(&a, &b, &grid).unwrap().abs() < 1e-12);
        // P(A)=P(B)=0.5, P(A,B)=0.4: PMI = ln 1.6, NPMI = -ln 1.6 / ln 0.4
        let v = npmi(&set(&[0, 1, 2, 3, 4]), &set(&[0, 1, 2, 3, 5]), &u).unwrap();
        assert!((1.6f64.ln() - 0.470_003_629_245_735_5).abs() < 1e-15);
        assert!((v - (-1.6f64.ln() / 0.4f64.ln())).abs() < 1e-12);
        assert!((v - 0.5129).abs() < 1e-4);
        assert!(npmi(&set(&[]), &set(&[1]), &u).is_err());
        assert!(matches!(npmi(&set(&[11]), &set(&[1]), &u), Err(ProximityError::OutsideUniverse(_))));
    }

    fn profile(cat: Category, users: &[u32], content: Vec<f64>) -> CategoryProfile {
        CategoryProfile {
            category: cat,
            user_set: set(users),
            mean_content_embedding: EmbeddingVector::new(content.clone()),
            mean_title_embedding: Some(EmbeddingVector::new(content)),
            n_texts: 1,
            missing_titles: vec![],
        }
    }

    #[test]
    fn report_shape_and_flags() {
        let mut profiles = BTreeMap::new();
        profiles.insert(Category::Politics, profile(Category::Politics, &[0, 1, 2, 3], vec![1.0, 0.0]));
        profiles.insert(Category::Arts, profile(Category::Arts, &[0, 1, 2, 5], vec![1.0, 0.2]));
        profiles.insert(Category::Cars, profile(Category::Cars, &[0, 1, 6, 5], vec![1.0, 0.5]));
        profiles.insert(Category::Music, profile(Category::Music, &[0, 7, 6, 5], vec![1.0, 0.9]));
        let u = universe(10);
        let f1 = BTreeMap::from([(Category::Arts, 0.8), (Category::Cars, 0.7), (Category::Music, 0.6)]);
        let report = proximity_report(&profiles, &f1, &u).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.correlations.len(), 4);
        assert!(report.correlations["jaccard"].r.unwrap() > 0.9);
        assert!(report.correlations["npmi"].r.unwrap() > 0.9);
        let flat = BTreeMap::from([(Category::Arts, 0.7), (Category::Cars, 0.7), (Category::Music, 0.7)]);
        let report = proximity_report(&profiles, &flat, &u).unwrap();
        assert!(report.correlations.values().all(|c| c.r.is_none() && c.flag.is_some()));
        assert_eq!(report.rows.len(), 3);
        profiles.remove(&Category::Politics);
        assert!(matches!(proximity_report(&profiles, &f1, &u), Err(ProximityError::MissingPolitics)));
    }

    proptest! {
        #[test]
        fn npmi_base_invariant(na in 1usize..20, nb in 1usize..20, k in 0usize..20, extra in 0usize..20) {
            prop_assume!(k <= na.min(nb));
            let n = (na + nb - k + extra) as f64;
            let (pa, pb, pab) = (na as f64 / n, nb as f64 / n, k as f64 / n);
            let e = npmi_from(pa, pb, pab, f64::ln);
            let two = npmi_from(pa, pb, pab, f64::log2);
            prop_assert!((e - two).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&e));
        }

        #[test]
        fn symmetric_and_monotone(na in 1u32..15, nb in 1u32..15, extra in 0u32..15) {
            let n = na + nb + extra;
            let u = universe(n);
            let mut last = (f64::MIN, f64::MIN);
            for k in 0..=na.min(nb) {
                let a: BTreeSet<String> = (0..na).map(|x| format!("u{x}")).collect();
                let b: BTreeSet<String> = (na - k..na - k + nb).map(|x| format!("u{x}")).collect();
                let j = jaccard(&a, &b);
                let p = npmi(&a, &b, &u).unwrap();
                prop_assert_eq!(j, jaccard(&b, &a));
                prop_assert_eq!(p, npmi(&b, &a, &u).unwrap());
                prop_assert!((0.0..=1.0).contains(&j) && (-1.0..=1.0).contains(&p));
                prop_assert!(j >= last.0 && p >= last.1 - 1e-12);
                last = (j, p);
            }
        }

        #[test]
        fn cosine_scale_invariant(v in prop::collection::vec(-5.0f64..5.0, 3), w in prop::collection::vec(-5.0f64..5.0, 3), s in 0.01f64..100.0) {
            let a = EmbeddingVector::new(v.clone());
            let b = EmbeddingVector::new(w.clone());
            prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
            let scaled = EmbeddingVector::new(v.iter().map(|x| x * s).collect());
            let c = cosine(&a, &b).unwrap();
            prop_assert!((c - cosine(&scaled, &b).unwrap()).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }
}
