use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{BaselineError, FeatureMatrix, GaussianNb, Logistic, LogisticParams, MultinomialNb, TfidfParams, TfidfVectorizer};
use crate::metrics::ConfusionMatrix;
use crate::rng::substream;

/// Assignment of documents to `k` folds, aligned with the input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    /// True when documents sharing a group id were kept in one fold.
    pub grouped: bool,
}

impl FoldSplit {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }
}

/// Label-stratified fold assignment. With `groups`, whole groups (users)
/// are assigned, stratified by each group's majority label, each to the
/// currently smallest fold.
pub fn stratified_folds(
    labels: &[usize],
    k: usize,
    seed: u64,
    groups: Option<&[String]>,
) -> Result<FoldSplit, BaselineError> {
    if k < 2 {
        return Err(BaselineError::TooFewFolds(k));
    }
    if labels.is_empty() {
        return Err(BaselineError::Empty);
    }
    let mut rng = substream(seed, "cv-folds");
    let mut assignments = vec![0; labels.len()];
    match groups {
        None => {
            let mut offset = 0;
            for class in 0..2 {
                let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
                idx.shuffle(&mut rng);
                for (pos, i) in idx.iter().enumerate() {
                    assignments[*i] = (offset + pos) % k;
                }
                offset += idx.len();
            }
        }
        Some(groups) => {
            if groups.len() != labels.len() {
                return Err(BaselineError::Shape(groups.len(), labels.len()));
            }
            let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, g) in groups.iter().enumerate() {
                members.entry(g).or_default().push(i);
            }
            let mut sizes = vec![0usize; k];
            for class in 0..2 {
                let mut stratum: Vec<&Vec<usize>> = members
                    .values()
                    .filter(|m| {
                        let ones = m.iter().filter(|&&i| labels[i] == 1).count();
                        usize::from(2 * ones > m.len()) == class
                    })
                    .collect();
                stratum.shuffle(&mut rng);
                for m in stratum {
                    let fold = (0..k).min_by_key(|&f| (sizes[f], f)).unwrap_or(0);
                    sizes[fold] += m.len();
                    for &i in m {
                        assignments[i] = fold;
                    }
                }
            }
        }
    }
    Ok(FoldSplit { k, assignments, seed, grouped: groups.is_some() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    NaiveBayes { alpha: f64 },
    Logistic(LogisticParams),
    GaussianNb { var_smoothing: f64 },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::NaiveBayes { .. } => "naive_bayes",
            ModelSpec::Logistic(_) => "logistic",
            ModelSpec::GaussianNb { .. } => "gaussian_nb",
        }
    }

    pub fn naive_bayes() -> Self {
        ModelSpec::NaiveBayes { alpha: 1.0 }
    }

    pub fn logistic() -> Self {
        ModelSpec::Logistic(LogisticParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    NaiveBayes(MultinomialNb),
    Logistic(Logistic),
    GaussianNb(GaussianNb),
}

impl Model {
    pub fn fit(spec: &ModelSpec, x: &FeatureMatrix, y: &[usize]) -> Result<Model, BaselineError> {
        Ok(match *spec {
            ModelSpec::NaiveBayes { alpha } => Model::NaiveBayes(MultinomialNb::train(x, y, alpha)?),
            ModelSpec::Logistic(p) => Model::Logistic(Logistic::train(x, y, p)?),
            ModelSpec::GaussianNb { var_smoothing } => Model::GaussianNb(GaussianNb::train(x, y, var_smoothing)?),
        })
    }

    pub fn prob_one(&self, row: &[(usize, f64)]) -> f64 {
        match self {
            Model::NaiveBayes(m) => m.prob_one(row),
            Model::Logistic(m) => m.prob_one(row),
            Model::GaussianNb(m) => m.prob_one(row),
        }
    }

    pub fn predict_row(&self, row: &[(usize, f64)]) -> usize {
        match self {
            Model::NaiveBayes(m) => m.predict_row(row),
            Model::Logistic(m) => m.predict_row(row),
            Model::GaussianNb(m) => m.predict_row(row),
        }
    }
}

/// Where fold features come from. TF-IDF is refit on each training split;
/// dense features (embeddings) carry no fitted state.
pub enum Features<'a, S: AsRef<str>> {
    Tfidf { texts: &'a [S], params: &'a TfidfParams },
    Dense(&'a FeatureMatrix),
}

impl<S: AsRef<str>> Features<'_, S> {
    fn len(&self) -> usize {
        match self {
            Features::Tfidf { texts, .. } => texts.len(),
            Features::Dense(m) => m.n_rows(),
        }
    }

    pub fn representation(&self) -> &'static str {
        match self {
            Features::Tfidf { .. } => "tfidf",
            Features::Dense(_) => "embedding",
        }
    }
}

/// Vectorizer fit on the training folds of `fold` only.
pub fn fold_vectorizer<S: AsRef<str>>(texts: &[S], split: &FoldSplit, fold: usize, params: &TfidfParams) -> TfidfVectorizer {
    let train: Vec<&str> = split.train_indices(fold).into_iter().map(|i| texts[i].as_ref()).collect();
    TfidfVectorizer::fit(&train, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvLevel {
    Text,
    /// Per held-out user, the mean predicted probability thresholded at 0.5.
    User,
}

impl CvLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CvLevel::Text => "text",
            CvLevel::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    pub f1: Option<f64>,
    /// Why the fold was left out of the mean.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub model: String,
    pub representation: String,
    pub level: CvLevel,
    pub folds: Vec<FoldResult>,
    pub mean_f1: f64,
    /// Sample standard deviation across the usable folds.
    pub sd: f64,
}

fn score(truth: &[usize], pred: &[usize]) -> f64 {
    let pairs: Vec<(usize, usize)> = truth.iter().copied().zip(pred.iter().copied()).collect();
    ConfusionMatrix::from_indices(&pairs).macro_f1()
}

/// k-fold cross-validation: fit on k-1 folds, macro F1 on the held-out fold.
/// Folds whose training or test side lacks a class are flagged and excluded.
/// `users` is required for [`CvLevel::User`]; a user's truth is the majority
/// of their text labels.
pub fn cross_validate<S: AsRef<str>>(
    spec: &ModelSpec,
    features: &Features<'_, S>,
    labels: &[usize],
    split: &FoldSplit,
    level: CvLevel,
    users: Option<&[String]>,
) -> Result<CvResult, BaselineError> {
    if split.k < 2 {
        return Err(BaselineError::TooFewFolds(split.k));
    }
    if features.len() != labels.len() || split.assignments.len() != labels.len() {
        return Err(BaselineError::Shape(features.len(), labels.len()));
    }
    let users = match (level, users) {
        (CvLevel::User, None) => return Err(BaselineError::Empty),
        (_, Some(u)) if u.len() != labels.len() => return Err(BaselineError::Shape(u.len(), labels.len())),
        (_, u) => u,
    };
    let mut folds = Vec::with_capacity(split.k);
    for fold in 0..split.k {
        let train = split.train_indices(fold);
        let test = split.test_indices(fold);
        let mut result = FoldResult { fold, n_test: test.len(), f1: None, flag: None };
        let has_both = |idx: &[usize]| (0..2).all(|c| idx.iter().any(|&i| labels[i] == c));
        if !has_both(&test) {
            result.flag = Some("test fold missing a class".into());
            folds.push(result);
            continue;
        }
        if !has_both(&train) {
            result.flag = Some("training folds missing a class".into());
            folds.push(result);
            continue;
        }
        let (x_train, x_test) = match features {
            Features::Tfidf { texts, params } => {
                let v = fold_vectorizer(texts, split, fold, params);
                let tr: Vec<&str> = train.iter().map(|&i| texts[i].as_ref()).collect();
                let te: Vec<&str> = test.iter().map(|&i| texts[i].as_ref()).collect();
                (v.transform(&tr), v.transform(&te))
            }
            Features::Dense(m) => (m.select(&train), m.select(&test)),
        };
        let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let model = Model::fit(spec, &x_train, &y_train)?;
        let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let f1 = match (level, users) {
            (CvLevel::User, Some(users)) => {
                // (sum of probabilities, count, count of label 1)
                let mut per_user: BTreeMap<&str, (f64, usize, usize)> = BTreeMap::new();
                for (row, &i) in x_test.rows.iter().zip(&test) {
                    let e = per_user.entry(users[i].as_str()).or_default();
                    e.0 += model.prob_one(row);
                    e.1 += 1;
                    e.2 += labels[i];
                }
                let truth: Vec<usize> = per_user.values().map(|&(_, n, ones)| usize::from(2 * ones > n)).collect();
                let pred: Vec<usize> = per_user.values().map(|&(p, n, _)| usize::from(p / n as f64 > 0.5)).collect();
                if !(0..2).all(|c| truth.contains(&c)) {
                    result.flag = Some("held-out users missing a class".into());
                    folds.push(result);
                    continue;
                }
                score(&truth, &pred)
            }
            _ => {
                let pred: Vec<usize> = x_test.rows.iter().map(|r| model.predict_row(r)).collect();
                score(&y_test, &pred)
            }
        };
        result.f1 = Some(f1);
        folds.push(result);
    }
    let used: Vec<f64> = folds.iter().filter_map(|f| f.f1).collect();
    if used.is_empty() {
        return Err(BaselineError::NoUsableFolds);
    }
    let mean_f1 = used.iter().sum::<f64>() / used.len() as f64;
    let sd = if used.len() > 1 {
        (used.iter().map(|f| (f - mean_f1).powi(2)).sum::<f64>() / (used.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    for f in folds.iter().filter(|f| f.flag.is_some()) {
        log::warn!("fold {} excluded: {}", f.fold, f.flag.as_deref().unwrap_or(""));
    }
    Ok(CvResult {
        model: spec.name().into(),
        representation: features.representation().into(),
        level,
        folds,
        mean_f1,
        sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(n: usize) -> (Vec<String>, Vec<usize>) {
        let mut texts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 2;
            let word = if y == 1 { "senate ballot" } else { "recipe garden" };
            texts.push(format!("{word} filler{} common", i % 7));
            labels.push(y);
        }
        (texts, labels)
    }

    #[test]
    fn separable_corpus_scores_high() {
        let (texts, labels) = corpus(100);
        let split = stratified_folds(&labels, 5, 1, None).unwrap();
        let params = TfidfParams::default();
        let features = Features::Tfidf { texts: &texts, params: &params };
        for spec in [ModelSpec::naive_bayes(), ModelSpec::logistic()] {
            let r = cross_validate(&spec, &features, &labels, &split, CvLevel::Text, None).unwrap();
            assert!(r.folds.iter().all(|f| f.f1.unwrap() >= 0.95), "{r:?}");
        }
    }

    #[test]
    fn grouping_keeps_users_together() {
        let labels = vec![0, 0, 0, 1, 1, 0, 1, 1, 0, 1, 0, 1];
        let groups: Vec<String> = ["u1", "u1", "u1", "u2", "u2", "u3", "u4", "u5", "u6", "u7", "u8", "u9"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let split = stratified_folds(&labels, 3, 9, Some(&groups)).unwrap();
        assert!(split.grouped);
        assert_eq!(split.assignments[0], split.assignments[1]);
        assert_eq!(split.assignments[1], split.assignments[2]);
        assert_eq!(split.assignments[3], split.assignments[4]);
    }

    #[test]
    fn flagged_folds_are_excluded() {
        let texts = ["a", "b", "a", "b", "a", "a", "b", "a"];
        let labels = [0, 1, 0, 1, 0, 0, 1, 0];
        // fold 1 holds only class 0
        let split = FoldSplit { k: 2, assignments: vec![0, 0, 1, 0, 1, 1, 0, 1], seed: 0, grouped: false };
        let params = TfidfParams::default();
        let r = cross_validate(&ModelSpec::naive_bayes(), &Features::Tfidf { texts: &texts, params: &params }, &labels, &split, CvLevel::Text, None);
        // fold 0 trains on class 0 only, fold 1 tests on class 0 only
        assert_eq!(r, Err(BaselineError::NoUsableFolds));
        assert_eq!(stratified_folds(&labels, 1, 0, None), Err(BaselineError::TooFewFolds(1)));
    }

    #[test]
    fn leakage_canary() {
        let (mut texts, labels) = corpus(40);
        let split = stratified_folds(&labels, 5, 3, None).unwrap();
        let held = split.test_indices(0)[0];
        texts[held].push_str(" zyzzyva");
        let params = TfidfParams::default();
        let fold = fold_vectorizer(&texts, &split, 0, &params);
        let full = TfidfVectorizer::fit(&texts, &params);
        assert!(!fold.vocab.contains_key("zyzzyva"));
        assert!(full.vocab.contains_key("zyzzyva"));
        assert_ne!(fold.idf, full.idf);
    }

    #[test]
    fn user_level() {
        let (texts, labels) = corpus(120);
        let users: Vec<String> = (0..120).map(|i| format!("u{}", i % 30)).collect();
        let split = stratified_folds(&labels, 5, 4, Some(&users)).unwrap();
        let params = TfidfParams::default();
        let r = cross_validate(&ModelSpec::logistic(), &Features::Tfidf { texts: &texts, params: &params }, &labels, &split, CvLevel::User, Some(&users)).unwrap();
        assert!(r.mean_f1 >= 0.95);
        assert_eq!(r.level, CvLevel::User);
    }

    proptest! {
        #[test]
        fn folds_partition_and_are_deterministic(labels in prop::collection::vec(0usize..2, 2..120), k in 2usize..7, seed in any::<u64>()) {
            let a = stratified_folds(&labels, k, seed, None).unwrap();
            let b = stratified_folds(&labels, k, seed, None).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.assignments.iter().all(|&f| f < k));
            let total: usize = (0..k).map(|f| a.test_indices(f).len()).sum();
            prop_assert_eq!(total, labels.len());
            // stratification keeps each class within one of even per fold
            for c in 0..2 {
                let per: Vec<usize> = (0..k).map(|f| a.test_indices(f).iter().filter(|&&i| labels[i] == c).count()).collect();
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
        }

        #[test]
        fn grouped_folds_never_split_users(groups in prop::collection::vec(0u8..15, 2..80), k in 2usize..6, seed in any::<u64>()) {
            let labels: Vec<usize> = groups.iter().map(|g| usize::from(g % 3 == 0)).collect();
            let ids: Vec<String> = groups.iter().map(|g| g.to_string()).collect();
            let s = stratified_folds(&labels, k, seed, Some(&ids)).unwrap();
            for i in 0..ids.len() {
                for j in 0..ids.len() {
                    if ids[i] == ids[j] {
                        prop_assert_eq!(s.assignments[i], s.assignments[j]);
                    }
                }
            }
        }
    }
}
