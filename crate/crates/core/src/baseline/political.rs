use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{BaselineError, GaussianNb, Logistic, LogisticParams, Model, ModelSpec, MultinomialNb, TfidfParams, TfidfVectorizer, TFIDF_FORMULA};
use crate::corpus::TextUnit;
use crate::metrics::ConfusionMatrix;
use crate::rng::substream;

pub const MODEL_MAGIC: [u8; 4] = *b"PLSC";
pub const MODEL_VERSION: u16 = 1;

/// How users were divided for training the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoliticalSplit {
    /// Half of the users, used for fitting and the held-out score.
    pub development_users: BTreeSet<String>,
    /// The other half; downstream filtering should run on these.
    pub evaluation_users: BTreeSet<String>,
    /// Development users whose texts were held out for the reported F1.
    pub heldout_users: BTreeSet<String>,
}

/// TF-IDF text classifier for Politics (1) versus general (0) content.
#[derive(Debug, Clone, PartialEq)]
pub struct PoliticalClassifier {
    pub spec: ModelSpec,
    pub vectorizer: TfidfVectorizer,
    pub model: Model,
    /// Macro F1 on the held-out development users.
    pub heldout_f1: f64,
    pub n_train_texts: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: String,
    spec: ModelSpec,
    tfidf_formula: String,
    n_vocab: usize,
    heldout_f1: f64,
    n_train_texts: usize,
    seed: u64,
}

fn label(t: &TextUnit) -> usize {
    usize::from(t.category.is_political())
}

fn fit(texts: &[&TextUnit], spec: &ModelSpec, params: &TfidfParams) -> Result<(TfidfVectorizer, Model), BaselineError> {
    let bodies: Vec<&str> = texts.iter().map(|t| t.body.as_str()).collect();
    let (x, v) = TfidfVectorizer::fit_transform(&bodies, params);
    let y: Vec<usize> = texts.iter().map(|t| label(t)).collect();
    Ok((v, Model::fit(spec, &x, &y)?))
}

/// Splits users 50/50 into development and evaluation halves, scores an
/// 80/20 user split of the development half, then refits on the whole
/// development half.
pub fn train_political_content_classifier(
    texts: &[TextUnit],
    spec: &ModelSpec,
    params: &TfidfParams,
    seed: u64,
) -> Result<(PoliticalClassifier, PoliticalSplit), BaselineError> {
    if texts.is_empty() {
        return Err(BaselineError::Empty);
    }
    for c in 0..2 {
        if !texts.iter().any(|t| label(t) == c) {
            return Err(BaselineError::MissingClass(c));
        }
    }
    let mut users: Vec<String> = texts.iter().map(|t| t.user_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    users.shuffle(&mut substream(seed, "political-users"));
    let half = users.len().div_ceil(2);
    let mut dev: Vec<String> = users[..half].to_vec();
    let evaluation_users: BTreeSet<String> = users[half..].iter().cloned().collect();
    dev.shuffle(&mut substream(seed, "political-heldout"));
    let n_heldout = (dev.len() / 5).max(1).min(dev.len().saturating_sub(1));
    let heldout_users: BTreeSet<String> = dev[..n_heldout].iter().cloned().collect();
    let development_users: BTreeSet<String> = dev.into_iter().collect();

    let dev_texts: Vec<&TextUnit> = texts.iter().filter(|t| development_users.contains(&t.user_id)).collect();
    let (train, heldout): (Vec<&TextUnit>, Vec<&TextUnit>) =
        dev_texts.iter().partition(|t| !heldout_users.contains(&t.user_id));
    for c in 0..2 {
        if !train.iter().any(|t| label(t) == c) {
            return Err(BaselineError::MissingClass(c));
        }
    }
    let (v, model) = fit(&train, spec, params)?;
    let bodies: Vec<&str> = heldout.iter().map(|t| t.body.as_str()).collect();
    let x = v.transform(&bodies);
    let pairs: Vec<(usize, usize)> = heldout.iter().zip(&x.rows).map(|(t, r)| (label(t), model.predict_row(r))).collect();
    let heldout_f1 = ConfusionMatrix::from_indices(&pairs).macro_f1();

    let (vectorizer, model) = fit(&dev_texts, spec, params)?;
    let clf = PoliticalClassifier { spec: *spec, vectorizer, model, heldout_f1, n_train_texts: dev_texts.len(), seed };
    Ok((clf, PoliticalSplit { development_users, evaluation_users, heldout_users }))
}

/// Held-out F1 of each candidate, by model name.
pub type CandidateScores = Vec<(&'static str, f64)>;

/// Trains every candidate on the same user split and keeps the one with the
/// highest held-out F1 (the earlier candidate on ties). Also returns each
/// candidate's name and held-out F1.
pub fn select_political_content_classifier(
    texts: &[TextUnit],
    candidates: &[ModelSpec],
    params: &TfidfParams,
    seed: u64,
) -> Result<(PoliticalClassifier, PoliticalSplit, CandidateScores), BaselineError> {
    let mut best: Option<(PoliticalClassifier, PoliticalSplit)> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for spec in candidates {
        let (clf, split) = train_political_content_classifier(texts, spec, params, seed)?;
        scores.push((spec.name(), clf.heldout_f1));
        if best.as_ref().is_none_or(|(b, _)| clf.heldout_f1 > b.heldout_f1) {
            best = Some((clf, split));
        }
    }
    let (clf, split) = best.ok_or(BaselineError::Empty)?;
    Ok((clf, split, scores))
}

struct Body(Vec<u8>);

impl Body {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BaselineError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| BaselineError::Format("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, BaselineError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, BaselineError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<usize, BaselineError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64, BaselineError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, BaselineError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, BaselineError> {
        let n = self.u32()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String, BaselineError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| BaselineError::Format(e.to_string()))
    }
}

impl PoliticalClassifier {
    pub fn prob_political(&self, text: &str) -> f64 {
        let x = self.vectorizer.transform(&[text]);
        self.model.prob_one(&x.rows[0])
    }

    pub fn predict(&self, text: &str) -> bool {
        let x = self.vectorizer.transform(&[text]);
        self.model.predict_row(&x.rows[0]) == 1
    }

    /// Layout: magic, version (u16), header length (u32), JSON header, then
    /// a little-endian body holding the vocabulary, idf table and model
    /// parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.spec.name().into(),
            spec: self.spec,
            tfidf_formula: TFIDF_FORMULA.into(),
            n_vocab: self.vectorizer.vocab.len(),
            heldout_f1: self.heldout_f1,
            n_train_texts: self.n_train_texts,
            seed: self.seed,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut b = Body(Vec::new());
        b.0.extend_from_slice(&MODEL_MAGIC);
        b.0.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        b.u32(header.len());
        b.0.extend_from_slice(&header);
        // vocabulary in column order
        let mut terms: Vec<(&String, &usize)> = self.vectorizer.vocab.iter().collect();
        terms.sort_by_key(|(_, &j)| j);
        b.u32(terms.len());
        terms.iter().for_each(|(t, _)| b.str(t));
        b.f64s(&self.vectorizer.idf);
        b.u32(self.vectorizer.stopwords.len());
        self.vectorizer.stopwords.iter().for_each(|s| b.str(s));
        match &self.model {
            Model::NaiveBayes(m) => {
                b.u8(0);
                b.f64(m.alpha);
                b.f64s(&m.log_prior);
                b.f64s(&m.log_cond[0]);
                b.f64s(&m.log_cond[1]);
            }
            Model::Logistic(m) => {
                b.u8(1);
                b.f64s(&m.weights);
                b.f64(m.bias);
                b.u8(u8::from(m.converged));
                b.u64(m.iterations as u64);
                b.f64(m.grad_norm);
                b.f64(m.params.l2);
                b.u64(m.params.max_iter as u64);
                b.f64(m.params.tol);
            }
            Model::GaussianNb(m) => {
                b.u8(2);
                b.f64(m.var_smoothing);
                b.f64s(&m.log_prior);
                for c in 0..2 {
                    b.f64s(&m.mean[c]);
                    b.f64s(&m.var[c]);
                }
            }
        }
        b.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, BaselineError> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(4)? != MODEL_MAGIC {
            return Err(BaselineError::Format("bad magic".into()));
        }
        let version = c.u16()?;
        if version != MODEL_VERSION {
            return Err(BaselineError::Format(format!("unsupported version {version}")));
        }
        let n = c.u32()?;
        let header: Header = serde_json::from_slice(c.take(n)?).map_err(|e| BaselineError::Format(e.to_string()))?;
        let n_terms = c.u32()?;
        let vocab = (0..n_terms).map(|j| Ok((c.str()?, j))).collect::<Result<_, BaselineError>>()?;
        let idf = c.f64s()?;
        let n_stop = c.u32()?;
        let stopwords = (0..n_stop).map(|_| c.str()).collect::<Result<_, _>>()?;
        if idf.len() != n_terms || header.n_vocab != n_terms {
            return Err(BaselineError::Format("vocabulary size mismatch".into()));
        }
        let pair = |v: Vec<f64>| -> Result<[f64; 2], BaselineError> {
            v.try_into().map_err(|_| BaselineError::Format("expected two priors".into()))
        };
        let model = match c.u8()? {
            0 => {
                let alpha = c.f64()?;
                let log_prior = pair(c.f64s()?)?;
                Model::NaiveBayes(MultinomialNb { alpha, log_prior, log_cond: [c.f64s()?, c.f64s()?] })
            }
            1 => Model::Logistic(Logistic {
                weights: c.f64s()?,
                bias: c.f64()?,
                converged: c.u8()? == 1,
                iterations: c.u64()? as usize,
                grad_norm: c.f64()?,
                params: LogisticParams { l2: c.f64()?, max_iter: c.u64()? as usize, tol: c.f64()? },
            }),
            2 => {
                let var_smoothing = c.f64()?;
                let log_prior = pair(c.f64s()?)?;
                let (m0, v0) = (c.f64s()?, c.f64s()?);
                let (m1, v1) = (c.f64s()?, c.f64s()?);
                Model::GaussianNb(GaussianNb { var_smoothing, log_prior, mean: [m0, m1], var: [v0, v1] })
            }
            t => return Err(BaselineError::Format(format!("unknown model tag {t}"))),
        };
        if c.pos != buf.len() {
            return Err(BaselineError::Format("trailing bytes".into()));
        }
        Ok(PoliticalClassifier {
            spec: header.spec,
            vectorizer: TfidfVectorizer { vocab, idf, stopwords },
            model,
            heldout_f1: header.heldout_f1,
            n_train_texts: header.n_train_texts,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Category;

    fn unit(i: usize, political: bool) -> TextUnit {
        let body = if political {
            format!("the senate vote on the ballot measure {i}")
        } else {
            format!("my garden recipe with fresh basil {i}")
        };
        TextUnit {
            text_id: format!("t{i}"),
            user_id: format!("u{}", i % 40),
            category: if political { Category::Politics } else { Category::Sports },
            group_key: "g".into(),
            token_count: body.split_whitespace().count(),
            body,
            created_at: None,
        }
    }

    fn corpus() -> Vec<TextUnit> {
        (0..200).map(|i| unit(i, i % 3 == 0)).collect()
    }

    #[test]
    fn trains_and_round_trips() {
        let texts = corpus();
        for spec in [ModelSpec::naive_bayes(), ModelSpec::logistic()] {
            let (clf, split) = train_political_content_classifier(&texts, &spec, &TfidfParams::default(), 5).unwrap();
            assert!(clf.heldout_f1 >= 0.9, "{}", clf.heldout_f1);
            assert!(split.development_users.is_disjoint(&split.evaluation_users));
            assert_eq!(split.development_users.len() + split.evaluation_users.len(), 40);
            assert!(split.heldout_users.is_subset(&split.development_users));
            let bytes = clf.to_bytes();
            assert_eq!(&bytes[..4], b"PLSC");
            let back = PoliticalClassifier::from_bytes(&bytes).unwrap();
            assert_eq!(back, clf);
            for t in &texts {
                assert_eq!(back.prob_political(&t.body).to_bits(), clf.prob_political(&t.body).to_bits());
            }
        }
    }

    #[test]
    fn selection_keeps_the_best_heldout_f1() {
        let texts = corpus();
        let specs = [ModelSpec::naive_bayes(), ModelSpec::logistic()];
        let (clf, split, scores) = select_political_content_classifier(&texts, &specs, &TfidfParams::default(), 5).unwrap();
        assert_eq!(scores.len(), 2);
        let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(clf.heldout_f1, best);
        let (_, nb_split) = train_political_content_classifier(&texts, &specs[0], &TfidfParams::default(), 5).unwrap();
        assert_eq!(split, nb_split);
        // ties go to the earlier candidate
        let (clf, _, _) = select_political_content_classifier(&texts, &[specs[0], specs[0]], &TfidfParams::default(), 5).unwrap();
        assert_eq!(clf.spec, specs[0]);
    }

    #[test]
    fn single_class_is_an_error() {
        let texts: Vec<TextUnit> = (0..20).map(|i| unit(i, false)).collect();
        let r = train_political_content_classifier(&texts, &ModelSpec::naive_bayes(), &TfidfParams::default(), 1);
        assert_eq!(r.unwrap_err(), BaselineError::MissingClass(1));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (clf, _) = train_political_content_classifier(&corpus(), &ModelSpec::naive_bayes(), &TfidfParams::default(), 2).unwrap();
        let bytes = clf.to_bytes();
        assert!(PoliticalClassifier::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(PoliticalClassifier::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(PoliticalClassifier::from_bytes(&extra).is_err());
    }
}
