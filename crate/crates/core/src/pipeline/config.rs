use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::aggregate::AggregationMethod;
use crate::backend::{BackendConfig, DEFAULT_DIM};
use crate::baseline::{LogisticParams, ModelSpec};
use crate::corpus::Source;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(format!("unknown backend {other:?} (expected mock or http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub source: Source,
    /// Directory holding `users.jsonl` and `texts.jsonl`.
    pub dir: PathBuf,
    /// Optional JSONL of `{group_key, title}`.
    pub titles: Option<PathBuf>,
    pub tokenizer: String,
    /// Reddit: drop users whose mean comment score is at or below this.
    pub min_mean_score: Option<f64>,
    /// Keep at most this many units per user.
    pub undersample_cap: Option<usize>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            source: Source::Reddit,
            dir: PathBuf::from("corpus"),
            titles: None,
            tokenizer: "whitespace".into(),
            min_mean_score: None,
            undersample_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub backend: BackendKind,
    /// `builtin:<name>` or a path to a template file.
    pub template: String,
    /// `infer` exits as partial when the malformed share exceeds this.
    pub malformed_threshold: f64,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            backend: BackendKind::Mock,
            template: "builtin:alignment_zero_shot".into(),
            malformed_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateSection {
    pub methods: Vec<AggregationMethod>,
}

impl Default for AggregateSection {
    fn default() -> Self {
        AggregateSection { methods: AggregationMethod::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_replicates: usize,
    /// Groups smaller than this are flagged low-support.
    pub min_group_support: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { n_replicates: crate::metrics::DEFAULT_REPLICATES, min_group_support: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisToggles {
    pub proximity: bool,
    pub lexical: bool,
    pub baseline: bool,
    pub sensitivity: bool,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        AnalysisToggles { proximity: true, lexical: true, baseline: true, sensitivity: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    /// Deterministic feature hashing; no network.
    Hashing,
    Precomputed,
    Http,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: EmbeddingKind,
    pub dim: usize,
    /// Vector file for the precomputed provider.
    pub path: Option<PathBuf>,
    pub model: String,
    pub endpoint: String,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: EmbeddingKind::Hashing,
            dim: DEFAULT_DIM,
            path: None,
            model: "text-embedding-3-small".into(),
            endpoint: "https://api.openai.com/v1/embeddings".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexicalSection {
    /// `general` (all non-Politics texts), `politics`, or a category name.
    pub scopes: Vec<String>,
    pub min_count: u64,
    pub bigrams: bool,
    pub top_n: usize,
    pub min_support: usize,
    pub quantiles: usize,
}

impl Default for LexicalSection {
    fn default() -> Self {
        LexicalSection {
            scopes: vec!["general".into()],
            min_count: crate::lexical::DEFAULT_MIN_COUNT,
            bigrams: false,
            top_n: 100,
            min_support: 5,
            quantiles: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub folds: usize,
    pub nb_alpha: f64,
    pub logistic: LogisticParams,
    pub var_smoothing: f64,
    pub min_df: usize,
    /// Candidates for the Politics-vs-general content classifier; the one
    /// with the best held-out F1 is kept.
    pub political_models: Vec<ModelSpec>,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            folds: 5,
            nb_alpha: 1.0,
            logistic: LogisticParams::default(),
            var_smoothing: 1e-9,
            min_df: 1,
            political_models: vec![ModelSpec::naive_bayes(), ModelSpec::logistic()],
        }
    }
}

/// Everything a run needs. Loaded from TOML; relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusSection,
    pub backend: BackendConfig,
    pub inference: InferenceSection,
    pub aggregate: AggregateSection,
    pub eval: EvalSection,
    pub analyses: AnalysisToggles,
    pub embedding: EmbeddingSection,
    pub lexical: LexicalSection,
    pub baseline: BaselineSection,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 17,
            out_dir: PathBuf::from("out"),
            corpus: CorpusSection::default(),
            backend: BackendConfig::default(),
            inference: InferenceSection::default(),
            aggregate: AggregateSection::default(),
            eval: EvalSection::default(),
            analyses: AnalysisToggles::default(),
            embedding: EmbeddingSection::default(),
            lexical: LexicalSection::default(),
            baseline: BaselineSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub concurrency: Option<usize>,
}

/// A parsed config plus the environment values substituted into it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// `(variable, value)` for every `${VAR}` that was expanded.
    pub interpolated: Vec<(String, String)>,
}

/// Expands `${VAR}` from `lookup`. `$$` is a literal dollar sign.
pub fn interpolate(
    text: &str,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<(String, Vec<(String, String)>), PipelineError> {
    let mut out = String::with_capacity(text.len());
    let mut used = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        if let Some(after) = tail.strip_prefix('$') {
            out.push('$');
            rest = after;
        } else if let Some(body) = tail.strip_prefix('{') {
            let end = body
                .find('}')
                .ok_or_else(|| PipelineError::Validation("unterminated ${...} in config".into()))?;
            let name = &body[..end];
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(PipelineError::Validation(format!("bad variable name {name:?} in config")));
            }
            let value = lookup(name)
                .ok_or_else(|| PipelineError::Validation(format!("config references unset variable {name}")))?;
            out.push_str(&value);
            if !used.iter().any(|(n, _)| n == name) {
                used.push((name.to_string(), value));
            }
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = tail;
        }
    }
    out.push_str(rest);
    Ok((out, used))
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Validation(format!("config: {e}")))
    }

    /// Reads, interpolates and parses `path`; relative paths are resolved
    /// against its directory.
    pub fn load(path: &Path) -> Result<LoadedConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let (expanded, interpolated) = interpolate(&text, |k| std::env::var(k).ok())?;
        let mut config = RunConfig::from_toml_str(&expanded)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base);
        Ok(LoadedConfig { config, interpolated })
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out_dir);
        resolve(base, &mut self.corpus.dir);
        for p in [&mut self.corpus.titles, &mut self.embedding.path, &mut self.backend.cache_path].into_iter().flatten() {
            resolve(base, p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(b) = o.backend {
            self.inference.backend = b;
        }
        if let Some(k) = o.concurrency {
            self.backend.max_in_flight = k;
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Validation(m.to_string()));
        self.backend.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.inference.malformed_threshold) {
            return bad("inference.malformed_threshold must lie in [0, 1]");
        }
        if self.aggregate.methods.is_empty() {
            return bad("aggregate.methods must not be empty");
        }
        if self.eval.n_replicates < 1 {
            return bad("eval.n_replicates must be at least 1");
        }
        if self.baseline.folds < 2 {
            return bad("baseline.folds must be at least 2");
        }
        if self.baseline.political_models.is_empty() {
            return bad("baseline.political_models must not be empty");
        }
        if self.embedding.dim == 0 {
            return bad("embedding.dim must be positive");
        }
        if self.embedding.provider == EmbeddingKind::Precomputed && self.embedding.path.is_none() {
            return bad("embedding.path is required for the precomputed provider");
        }
        if self.lexical.quantiles < 2 {
            return bad("lexical.quantiles must be at least 2");
        }
        for s in &self.lexical.scopes {
            if s != "general" && s != "politics" && crate::corpus::Category::parse(s).is_none() {
                return Err(PipelineError::Validation(format!("unknown lexical scope {s:?}")));
            }
        }
        if self.corpus.undersample_cap == Some(0) {
            return bad("corpus.undersample_cap must be at least 1");
        }
        Ok(())
    }

    /// Hash of the settings that determine results. The output directory,
    /// cache location and concurrency are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("out_dir");
            if let Some(Value::Object(b)) = m.get_mut("backend") {
                b.remove("cache_path");
                b.remove("max_in_flight");
            }
        }
        hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
    }

    /// The config as recorded in manifests: interpolated values are put back
    /// as `${VAR}` so secrets never reach disk.
    pub fn redacted_json(&self, interpolated: &[(String, String)]) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let secrets: BTreeSet<(&str, &str)> =
            interpolated.iter().filter(|(_, val)| !val.is_empty()).map(|(n, val)| (n.as_str(), val.as_str())).collect();
        redact(&mut v, &secrets);
        v
    }
}

fn redact(v: &mut Value, secrets: &BTreeSet<(&str, &str)>) {
    match v {
        Value::String(s) => {
            for (name, val) in secrets {
                if s.contains(val) {
                    *s = s.replace(val, &format!("${{{name}}}"));
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(|x| redact(x, secrets)),
        Value::Object(m) => m.values_mut().for_each(|x| redact(x, secrets)),
        _ => {}
    }
}

/// JSON with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let sorted: std::collections::BTreeMap<&String, Value> = m.iter().map(|(k, x)| (k, sort(x))).collect();
                Value::Object(sorted.into_iter().map(|(k, x)| (k.clone(), x)).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    sort(v).to_string()
}
