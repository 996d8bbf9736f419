//! LLM provider interface: prompt templating, strict answer parsing,
//! caching, bounded-concurrency batch inference and embeddings.

mod cache;
mod embed;
mod mock;
mod openai;
mod parse;
mod template;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, CacheLine, PredictionCache};
pub use embed::{
    content_hash, embed_texts, EmbedError, EmbeddingCache, EmbeddingLine, EmbeddingProvider, EmbeddingVector,
    HashingEmbedder, HttpEmbedder, PrecomputedEmbeddings, DEFAULT_DIM,
};
pub use mock::{MarkerTable, MockBackend, DEMOCRATIC_MARKERS, REPUBLICAN_MARKERS};
pub use openai::{extract_content, ChatBackend};
pub use parse::{
    extract_json_objects, first_json_object, parse_answer, parse_category, parse_prediction, InferenceResult,
    MalformedReason, MalformedResponse, Prediction,
};
pub use template::{render_prompt, PromptStyle, PromptTemplate, TemplateError, PLACEHOLDER};

use crate::corpus::{Category, TextUnit};
use crate::http::RetryPolicy;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("permanent backend failure: {0}")]
    Permanent(String),
    #[error("prediction cache: {0}")]
    Cache(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("answer ratio of an empty result list is undefined")]
    EmptyResults,
}

/// What the model is being asked to do. Real backends only look at the
/// rendered prompt; mocks use the task and the raw text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Alignment,
    Categorize,
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub task: Task,
    pub prompt: &'a str,
    /// The text substituted into the prompt.
    pub text: &'a str,
}

pub trait CompletionBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;
    /// Whether calls leave the process.
    fn is_network(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub model_id: String,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub retry_cap: u32,
    pub cache_path: Option<PathBuf>,
    pub temperature: f64,
    pub backoff_base_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            model_id: "mock-planted-v1".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_in_flight: 4,
            retry_cap: 5,
            cache_path: None,
            temperature: 0.0,
            backoff_base_ms: 1000,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_in_flight < 1 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        if self.model_id.is_empty() {
            return Err(BackendError::Config("model_id must not be empty".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { base: Duration::from_millis(self.backoff_base_ms), max_retries: self.retry_cap, ..RetryPolicy::default() }
    }
}

/// Outcome of [`infer_batch`].
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// One entry per input, in input order.
    pub results: Vec<(String, InferenceResult)>,
    pub backend_calls: usize,
    pub cache_hits: usize,
    /// Inputs whose requests failed even after retries.
    pub transport_failures: usize,
}

/// Fraction of results that are well-formed predictions.
pub fn answer_ratio<K>(results: &[(K, InferenceResult)]) -> Result<f64, BackendError> {
    if results.is_empty() {
        return Err(BackendError::EmptyResults);
    }
    Ok(results.iter().filter(|(_, r)| r.is_ok()).count() as f64 / results.len() as f64)
}

fn request_with_retry(
    backend: &dyn CompletionBackend,
    request: &CompletionRequest<'_>,
    policy: &RetryPolicy,
    calls: &AtomicUsize,
) -> Result<String, BackendError> {
    let mut retry = 0;
    loop {
        calls.fetch_add(1, Ordering::Relaxed);
        match backend.complete(request) {
            Err(BackendError::Transient(msg)) if retry < policy.max_retries => {
                let wait = policy.delay(retry);
                log::debug!("transient failure ({msg}); retry {} in {wait:?}", retry + 1);
                std::thread::sleep(wait);
                retry += 1;
            }
            other => return other,
        }
    }
}

/// Runs alignment inference over `texts`.
///
/// Cached answers are reused without calling the backend; at most
/// `config.max_in_flight` requests run concurrently; transient failures are
/// retried with exponential backoff and then recorded as
/// `MalformedResponse(transport)`. An authentication failure aborts the
/// whole batch.
pub fn infer_batch(
    texts: &[TextUnit],
    template: &PromptTemplate,
    backend: &dyn CompletionBackend,
    config: &BackendConfig,
    cache: &PredictionCache,
) -> Result<BatchOutcome, BackendError> {
    config.validate()?;
    let model = backend.model_id().to_string();
    let version = template.versioned_id();
    let policy = config.retry_policy();

    let mut slots: Vec<Option<InferenceResult>> = vec![None; texts.len()];
    let mut pending = Vec::new();
    let mut cache_hits = 0;
    for (i, t) in texts.iter().enumerate() {
        match cache.get(&cache_key(&model, &version, &t.body)) {
            Some(line) => {
                slots[i] = Some(line.result());
                cache_hits += 1;
            }
            None => pending.push(i),
        }
    }

    let calls = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<BackendError>> = Mutex::new(None);
    let filled: Mutex<Vec<(usize, InferenceResult, bool)>> = Mutex::new(Vec::with_capacity(pending.len()));
    let workers = config.max_in_flight.min(pending.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&i) = pending.get(j) else { break };
                let text = &texts[i];
                let outcome = render_prompt(template, &text.body).map_err(BackendError::from).and_then(|prompt| {
                    let req = CompletionRequest { task: Task::Alignment, prompt: &prompt, text: &text.body };
                    request_with_retry(backend, &req, &policy, &calls)
                });
                let (result, transport) = match outcome {
                    Ok(raw) => {
                        let result = parse_prediction(&raw, &model, &version);
                        let line =
                            CacheLine::from_result(cache_key(&model, &version, &text.body), &model, &version, &result, config.temperature);
                        if let Err(e) = cache.insert(line) {
                            abort.store(true, Ordering::Relaxed);
                            fatal.lock().expect("fatal").get_or_insert(e);
                        }
                        (result, false)
                    }
                    Err(e @ (BackendError::Auth(_) | BackendError::Template(_) | BackendError::Config(_))) => {
                        abort.store(true, Ordering::Relaxed);
                        fatal.lock().expect("fatal").get_or_insert(e);
                        break;
                    }
                    Err(e) => {
                        log::warn!("text {}: giving up: {e}", text.text_id);
                        (Err(MalformedResponse { reason: MalformedReason::Transport, raw: e.to_string() }), true)
                    }
                };
                filled.lock().expect("results").push((i, result, transport));
            });
        }
    });

    if let Some(e) = fatal.into_inner().expect("fatal") {
        return Err(e);
    }
    let mut transport_failures = 0;
    for (i, result, transport) in filled.into_inner().expect("results") {
        transport_failures += transport as usize;
        slots[i] = Some(result);
    }
    let results = texts
        .iter()
        .zip(slots)
        .map(|(t, r)| (t.text_id.clone(), r.expect("every input is resolved")))
        .collect();
    Ok(BatchOutcome { results, backend_calls: calls.into_inner(), cache_hits, transport_failures })
}

/// Category assignment for a community description.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryAssignment {
    pub category: Category,
    /// Set when the description was empty or the answer never parsed.
    pub warning: Option<String>,
}

/// Classifies a community description into one of the 23 categories.
/// Empty descriptions and answers that never parse fall back to
/// `Miscellaneous` with a warning.
pub fn classify_subreddit(
    description: &str,
    template: &PromptTemplate,
    backend: &dyn CompletionBackend,
    config: &BackendConfig,
) -> Result<CategoryAssignment, BackendError> {
    if description.trim().is_empty() {
        return Ok(CategoryAssignment {
            category: Category::Miscellaneous,
            warning: Some("empty description".into()),
        });
    }
    let prompt = render_prompt(template, description)?;
    let req = CompletionRequest { task: Task::Categorize, prompt: &prompt, text: description };
    let policy = config.retry_policy();
    let calls = AtomicUsize::new(0);
    let mut last = String::new();
    for _ in 0..=config.retry_cap {
        match request_with_retry(backend, &req, &policy, &calls) {
            Ok(raw) => match parse_category(&raw) {
                Ok(category) => return Ok(CategoryAssignment { category, warning: None }),
                Err(reason) => last = format!("{reason}: {raw}"),
            },
            Err(e @ BackendError::Auth(_)) => return Err(e),
            Err(e) => last = e.to_string(),
        }
    }
    Ok(CategoryAssignment { category: Category::Miscellaneous, warning: Some(format!("unparseable category answer ({last})")) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PartyLabel;
    use std::sync::atomic::AtomicUsize;

    fn unit(id: &str, body: &str) -> TextUnit {
        TextUnit {
            text_id: id.into(),
            user_id: "u".into(),
            category: Category::Arts,
            group_key: "g".into(),
            body: body.into(),
            token_count: 1,
            created_at: None,
        }
    }

    /// Counts calls and tracks peak concurrency around an inner backend.
    struct Probe<B> {
        inner: B,
        calls: AtomicUsize,
        in_flight: AtomicUsize,
        peak: AtomicUsize,
    }

    impl<B> Probe<B> {
        fn new(inner: B) -> Self {
            Probe { inner, calls: AtomicUsize::new(0), in_flight: AtomicUsize::new(0), peak: AtomicUsize::new(0) }
        }
    }

    impl<B: CompletionBackend> CompletionBackend for Probe<B> {
        fn model_id(&self) -> &str {
            self.inner.model_id()
        }
        fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(2));
            let out = self.inner.complete(request);
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            out
        }
    }

    fn cfg(max_in_flight: usize) -> BackendConfig {
        BackendConfig { max_in_flight, backoff_base_ms: 0, retry_cap: 3, ..BackendConfig::default() }
    }

    fn template() -> PromptTemplate {
        PromptTemplate::builtin("alignment_zero_shot").unwrap()
    }

    #[test]
    fn warm_cache_needs_no_calls() {
        let texts = [unit("a", "liberty"), unit("b", "climate"), unit("c", "flag flag")];
        let cache = PredictionCache::in_memory();
        let mock = MockBackend::default();
        let t = template();
        for text in &texts {
            let raw = mock.complete(&CompletionRequest { task: Task::Alignment, prompt: "", text: &text.body }).unwrap();
            let r = parse_prediction(&raw, mock.model_id(), &t.versioned_id());
            cache.insert(CacheLine::from_result(cache_key(mock.model_id(), &t.versioned_id(), &text.body), mock.model_id(), &t.versioned_id(), &r, 0.0)).unwrap();
        }
        let probe = Probe::new(mock);
        let out = infer_batch(&texts, &t, &probe, &cfg(2), &cache).unwrap();
        assert_eq!(probe.calls.load(Ordering::SeqCst), 0);
        assert_eq!(out.backend_calls, 0);
        assert_eq!(out.cache_hits, 3);
        assert_eq!(out.results.len(), 3);
    }

    #[test]
    fn mock_batch_is_well_formed_and_bounded() {
        let texts: Vec<TextUnit> = (0..100)
            .map(|i| {
                let markers = ["liberty", "climate", "border", "equity"];
                let body = format!("text {i} {} plain words", markers[i % 4]);
                unit(&format!("t{i}"), &body)
            })
            .collect();
        let probe = Probe::new(MockBackend::default());
        let cache = PredictionCache::in_memory();
        let out = infer_batch(&texts, &template(), &probe, &cfg(3), &cache).unwrap();
        assert_eq!(out.results.len(), 100);
        assert!(out.results.iter().all(|(_, r)| r.is_ok()));
        assert!(probe.peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(answer_ratio(&out.results).unwrap(), 1.0);
        // order preserved and mock oracle agrees
        for ((id, r), t) in out.results.iter().zip(&texts) {
            assert_eq!(id, &t.text_id);
            let p = r.as_ref().unwrap();
            assert_eq!((p.party, p.confidence), MockBackend::default().judge(&t.body));
        }
        // idempotent on a warm cache
        let again = infer_batch(&texts, &template(), &probe, &cfg(3), &cache).unwrap();
        assert_eq!(again.backend_calls, 0);
        assert_eq!(
            again.results.iter().map(|(k, r)| (k.clone(), r.clone())).collect::<Vec<_>>(),
            out.results
        );
    }

    struct Flaky {
        failures_left: Mutex<u32>,
        error: fn() -> BackendError,
    }

    impl CompletionBackend for Flaky {
        fn model_id(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, BackendError> {
            let mut left = self.failures_left.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err((self.error)());
            }
            Ok(r#"{"party":"Democratic","confidence":2}"#.into())
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let b = Flaky { failures_left: Mutex::new(3), error: || BackendError::Transient("429".into()) };
        let out = infer_batch(&[unit("a", "x")], &template(), &b, &cfg(1), &PredictionCache::in_memory()).unwrap();
        assert_eq!(out.backend_calls, 4);
        assert_eq!(out.results[0].1.as_ref().unwrap().party, PartyLabel::Democratic);
    }

    #[test]
    fn exhausted_retries_become_transport_malformed() {
        let b = Flaky { failures_left: Mutex::new(100), error: || BackendError::Transient("503".into()) };
        let cache = PredictionCache::in_memory();
        let out = infer_batch(&[unit("a", "x")], &template(), &b, &cfg(1), &cache).unwrap();
        assert_eq!(out.results[0].1.as_ref().unwrap_err().reason, MalformedReason::Transport);
        assert_eq!(out.transport_failures, 1);
        assert!(cache.is_empty(), "transport failures must not be cached");
    }

    #[test]
    fn auth_failure_aborts_batch() {
        let b = Flaky { failures_left: Mutex::new(100), error: || BackendError::Auth("401".into()) };
        let texts: Vec<TextUnit> = (0..10).map(|i| unit(&format!("t{i}"), "x")).collect();
        let err = infer_batch(&texts, &template(), &b, &cfg(2), &PredictionCache::in_memory()).unwrap_err();
        assert!(matches!(err, BackendError::Auth(_)));
    }

    #[test]
    fn answer_ratio_counts_predictions() {
        let ok = parse_prediction(r#"{"party":"Republican","confidence":1}"#, "m", "v");
        let bad = parse_prediction("garbage", "m", "v");
        let results = vec![(1, ok.clone()), (2, ok.clone()), (3, ok.clone()), (4, ok), (5, bad)];
        // counting oracle: 4 of 5
        assert!((answer_ratio(&results).unwrap() - 4.0 / 5.0).abs() < 1e-15);
        assert!(answer_ratio::<u8>(&[]).is_err());
    }

    #[test]
    fn classification_is_closed_set() {
        let t = PromptTemplate::builtin("categorize_subreddit").unwrap();
        let mock = MockBackend::default();
        let c = classify_subreddit("A forum about tax policy and the economy", &t, &mock, &cfg(1)).unwrap();
        assert!(Category::ALL.contains(&c.category));
        assert_eq!(classify_subreddit("guitar talk", &t, &mock, &cfg(1)).unwrap().category, Category::Music);
        assert_eq!(classify_subreddit("Watches", &t, &mock, &cfg(1)).unwrap().category, Category::Fashion);
        let empty = classify_subreddit("  ", &t, &mock, &cfg(1)).unwrap();
        assert_eq!(empty.category, Category::Miscellaneous);
        assert!(empty.warning.is_some());
    }

    struct Babbler;
    impl CompletionBackend for Babbler {
        fn model_id(&self) -> &str {
            "babbler"
        }
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, BackendError> {
            Ok("I think it is about cooking".into())
        }
    }

    #[test]
    fn unparseable_category_falls_back() {
        let t = PromptTemplate::builtin("categorize_subreddit").unwrap();
        let c = classify_subreddit("recipes", &t, &Babbler, &cfg(1)).unwrap();
        assert_eq!(c.category, Category::Miscellaneous);
        assert!(c.warning.unwrap().contains("unparseable"));
    }
}
