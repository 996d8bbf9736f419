//! Text embeddings: provider trait, a content-hash cache and three providers
//! (deterministic hashing, precomputed file, remote HTTP).

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{send_with_retry, HttpRequest, HttpTransport, RetryPolicy};
use crate::lexical::tokenize_words;
use crate::rng::derive_seed;

pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no precomputed embedding for content hash {0}")]
    Missing(String),
    #[error("embedding has dimension {got}, provider expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("embedding file {path}: {message}")]
    File { path: String, message: String },
    #[error("embedding request failed: {0}")]
    Remote(String),
}

/// A fixed-length vector with its cached Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        EmbeddingVector { values, norm }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Coordinate-wise arithmetic mean. `None` for an empty input or mixed
    /// dimensions.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a EmbeddingVector>) -> Option<EmbeddingVector> {
        let mut acc: Option<Vec<f64>> = None;
        let mut n = 0usize;
        for v in vectors {
            match &mut acc {
                None => acc = Some(v.values.clone()),
                Some(a) => {
                    if a.len() != v.values.len() {
                        return None;
                    }
                    a.iter_mut().zip(&v.values).for_each(|(x, y)| *x += y);
                }
            }
            n += 1;
        }
        acc.map(|mut a| {
            a.iter_mut().for_each(|x| *x /= n as f64);
            EmbeddingVector::new(a)
        })
    }
}

/// SHA-256 hex digest of a text; the key for embedding caches and files.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Content-hash keyed cache shared across calls to [`embed_texts`].
#[derive(Default)]
pub struct EmbeddingCache {
    entries: Mutex<HashMap<String, Arc<EmbeddingVector>>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        EmbeddingCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("embedding cache").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One vector per input text, all of the provider's dimension.
pub fn embed_texts<S: AsRef<str>>(
    texts: &[S],
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
) -> Result<Vec<Arc<EmbeddingVector>>, EmbedError> {
    let mut out = Vec::with_capacity(texts.len());
    for text in texts {
        let key = content_hash(text.as_ref());
        if let Some(v) = cache.entries.lock().expect("embedding cache").get(&key) {
            out.push(v.clone());
            continue;
        }
        let values = provider.embed(text.as_ref())?;
        if values.len() != provider.dim() {
            return Err(EmbedError::Dimension { expected: provider.dim(), got: values.len() });
        }
        let v = Arc::new(EmbeddingVector::new(values));
        cache.entries.lock().expect("embedding cache").insert(key, v.clone());
        out.push(v);
    }
    Ok(out)
}

/// Deterministic bag-of-words embedder: every word maps to a seeded random
/// direction and a text is the normalized sum of its words' directions.
/// Texts sharing vocabulary are therefore close, which makes it usable for
/// synthetic similarity experiments.
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
    word_vectors: Mutex<HashMap<String, Arc<Vec<f64>>>>,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashingEmbedder { dim, seed, word_vectors: Mutex::new(HashMap::new()) }
    }

    fn word_vector(&self, word: &str) -> Arc<Vec<f64>> {
        if let Some(v) = self.word_vectors.lock().expect("word vectors").get(word) {
            return v.clone();
        }
        let mut rng = crate::rng::indexed_stream(derive_seed(self.seed, word), 0);
        let v: Arc<Vec<f64>> = Arc::new((0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        self.word_vectors.lock().expect("word vectors").insert(word.to_string(), v.clone());
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut words = tokenize_words(text);
        if words.is_empty() {
            words.push(text.to_string());
        }
        let mut acc = vec![0.0; self.dim];
        for w in &words {
            let v = self.word_vector(w);
            acc.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += b);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(acc)
    }
}

/// One line of `embeddings.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingLine {
    pub hash: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// Vectors computed elsewhere, looked up by content hash.
pub struct PrecomputedEmbeddings {
    dim: usize,
    by_hash: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let file_err = |message: String| EmbedError::File { path: path.display().to_string(), message };
        let lines: Vec<EmbeddingLine> = crate::corpus::read_jsonl(path).map_err(|e| file_err(e.to_string()))?;
        PrecomputedEmbeddings::from_lines(lines).map_err(|e| file_err(e.to_string()))
    }

    pub fn from_lines(lines: Vec<EmbeddingLine>) -> Result<Self, EmbedError> {
        let dim = lines.first().map(|l| l.dim).unwrap_or(DEFAULT_DIM);
        let mut by_hash = HashMap::with_capacity(lines.len());
        for l in lines {
            if l.dim != dim || l.values.len() != dim {
                return Err(EmbedError::Dimension { expected: dim, got: l.values.len() });
            }
            by_hash.insert(l.hash, l.values);
        }
        Ok(PrecomputedEmbeddings { dim, by_hash })
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let h = content_hash(text);
        self.by_hash.get(&h).cloned().ok_or(EmbedError::Missing(h))
    }
}

/// Remote embeddings endpoint (OpenAI-compatible `/embeddings` payload).
pub struct HttpEmbedder {
    transport: Arc<dyn HttpTransport>,
    endpoint: String,
    model: String,
    api_key: String,
    dim: usize,
    retry: RetryPolicy,
}

impl HttpEmbedder {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: String,
        dim: usize,
        retry: RetryPolicy,
    ) -> Self {
        HttpEmbedder { transport, endpoint: endpoint.into(), model: model.into(), api_key, dim, retry }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let req = HttpRequest::post_json(&self.endpoint, &json!({"model": self.model, "input": text}))
            .header("authorization", format!("Bearer {}", self.api_key));
        let delivered = send_with_retry(self.transport.as_ref(), &req, &self.retry)
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        let v: Value =
            serde_json::from_slice(&delivered.response.body).map_err(|e| EmbedError::Remote(e.to_string()))?;
        v.pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .ok_or_else(|| EmbedError::Remote("payload has no data[0].embedding".into()))
    }
}
