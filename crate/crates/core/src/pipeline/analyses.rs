//! Analyses downstream of eval, and the final report.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::artifacts::*;
use super::manifest::{sha256_file, Manifest};
use super::stages::{answers_by_user, gold_map, load_ingested, read_eval, read_predictions};
use super::{Command, EmbeddingKind, PipelineError, Run, Stage};
use crate::aggregate::{aggregate_users, AggregationMethod};
use crate::backend::{embed_texts, EmbeddingCache, EmbeddingProvider, HashingEmbedder, HttpEmbedder, PrecomputedEmbeddings};
use crate::baseline::{
    cross_validate, sensitivity_filter, stratified_folds, select_political_content_classifier, write_baseline_csv,
    BaselineRow, CvLevel, FeatureMatrix, Features, ModelSpec, PoliticalClassifier, PoliticalSplit, RemovalStats,
    TfidfParams, TFIDF_FORMULA,
};
use crate::corpus::{load_titles, Category, PartyLabel, TextUnit};
use crate::http::ReqwestTransport;
use crate::lexical::{
    analyze_category, quantile_f1_curve, wordcloud_export, write_quantile_csv, write_wordstats_csv, LexicalConfig,
};
use crate::metrics::ConfusionMatrix;
use crate::proximity::{build_profiles, proximity_report, CorrelationSummary};
use crate::rng::derive_seed;

fn embedder(run: &Run) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    let e = &run.config.embedding;
    Ok(match e.provider {
        EmbeddingKind::Hashing => Box::new(HashingEmbedder::new(e.dim, derive_seed(run.config.seed, "embedding"))),
        EmbeddingKind::Precomputed => {
            let path = e.path.as_ref().expect("validated");
            Box::new(PrecomputedEmbeddings::load(require(path)?).map_err(|x| PipelineError::Validation(x.to_string()))?)
        }
        EmbeddingKind::Http if run.offline => {
            return Err(PipelineError::Validation("NO_NETWORK=1 rules out the http embedding provider".into()))
        }
        EmbeddingKind::Http => {
            let b = &run.config.backend;
            let key = std::env::var(&b.api_key_env)
                .map_err(|_| PipelineError::Validation(format!("environment variable {} is not set", b.api_key_env)))?;
            let transport = ReqwestTransport::new(std::time::Duration::from_secs(60), "polis-probe")
                .map_err(|x| PipelineError::Transport(x.0))?;
            Box::new(HttpEmbedder::new(Arc::new(transport), &e.endpoint, &e.model, key, e.dim, b.retry_policy()))
        }
        EmbeddingKind::None => {
            return Err(PipelineError::Validation("this analysis needs an embedding provider".into()));
        }
    })
}

fn titles(run: &Run, stage: &mut Stage) -> Result<HashMap<String, String>, PipelineError> {
    let path = run.path(CORPUS_DIR).join(TITLES_FILE);
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let t = load_titles(&path).map_err(|e| PipelineError::stage("titles", e))?;
    stage.inputs.push(path);
    Ok(t.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityBody {
    pub correlations: BTreeMap<String, CorrelationSummary>,
}

pub(crate) fn proximity(run: &Run) -> Result<Stage, PipelineError> {
    let mut stage = Stage::default();
    let reports = read_eval(run, &mut stage)?;
    let corpus = load_ingested(run, &mut stage)?;
    let titles = titles(run, &mut stage)?;
    let by_cat = reports
        .iter()
        .find(|r| r.scope.ends_with("/by_category/text"))
        .ok_or_else(|| PipelineError::stage("proximity", "eval has no per-category scores"))?;
    let f1: BTreeMap<Category, f64> = by_cat
        .group_scores
        .iter()
        .flatten()
        .filter_map(|(g, s)| Category::parse(g).map(|c| (c, s.f1)))
        .collect();
    let provider = embedder(run)?;
    let profiles = build_profiles(&corpus.texts, &titles, provider.as_ref(), &EmbeddingCache::new())
        .map_err(|e| PipelineError::stage("proximity", e))?;
    let universe: BTreeSet<String> = corpus.users.iter().map(|u| u.user_id.clone()).collect();
    let report = proximity_report(&profiles, &f1, &universe).map_err(|e| PipelineError::stage("proximity", e))?;

    let csv = run.path(PROXIMITY_CSV);
    report.write_csv(&csv).map_err(|e| PipelineError::stage("proximity", e))?;
    let summary = run.path(PROXIMITY_SUMMARY);
    let body = ProximityBody { correlations: report.correlations.clone() };
    write_json(&summary, &Stamped { config_hash: run.config_hash(), seed: run.config.seed, body })?;
    stage.outputs.extend([csv, summary]);
    for (col, c) in &report.correlations {
        stage.stat(&format!("r/{col}"), c.r);
    }
    stage.stat("n_categories", report.rows.len());
    Ok(stage)
}

/// Focal and background texts for a lexical scope.
fn lexical_split<'a>(texts: &'a [TextUnit], scope: &str) -> (Vec<TextUnit>, Vec<TextUnit>) {
    let pick = |f: &dyn Fn(&'a TextUnit) -> bool| -> Vec<TextUnit> { texts.iter().filter(|t| f(t)).cloned().collect() };
    match scope {
        "general" => (pick(&|t| !t.category.is_political()), pick(&|t| t.category.is_political())),
        "politics" => (pick(&|t| t.category.is_political()), pick(&|t| !t.category.is_political())),
        name => {
            let c = Category::parse(name).expect("validated scope");
            (pick(&|t| t.category == c), pick(&|t| t.category.is_political()))
        }
    }
}

pub(crate) fn lexical(run: &Run) -> Result<Stage, PipelineError> {
    let lc = &run.config.lexical;
    let mut stage = Stage::default();
    let preds = read_predictions(run, &mut stage)?;
    let corpus = load_ingested(run, &mut stage)?;
    let gold = gold_map(&corpus);
    let by_text: HashMap<String, (PartyLabel, u8)> =
        preds.iter().filter_map(|p| p.answer().map(|a| (p.text_id.clone(), a))).collect();
    let cfg = LexicalConfig {
        min_count: lc.min_count,
        bigrams: lc.bigrams,
        top_n: lc.top_n,
        word_f1_min_support: lc.min_support,
        curve_quantiles: lc.quantiles,
        ..LexicalConfig::default()
    };
    let dir = run.path(LEXICAL_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    for scope in &lc.scopes {
        let (focal, background) = lexical_split(&corpus.texts, scope);
        let analysis = match analyze_category(scope, &focal, &background, &by_text, &gold, &cfg) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("lexical {scope}: {e}");
                stage.stat(&format!("{scope}/skipped"), e.to_string());
                continue;
            }
        };
        let [stats_csv, cloud_json, curve_csv] = lexical_paths(run.out_dir(), scope);
        write_wordstats_csv(&stats_csv, &analysis.stats).map_err(|e| PipelineError::stage("lexical", e))?;
        wordcloud_export(scope, &analysis.stats, cfg.top_n).write(&cloud_json).map_err(|e| PipelineError::stage("lexical", e))?;
        stage.outputs.extend([stats_csv, cloud_json]);
        match quantile_f1_curve(&analysis.stats, cfg.curve_quantiles) {
            Ok(points) => {
                write_quantile_csv(&curve_csv, &points).map_err(|e| PipelineError::stage("lexical", e))?;
                stage.outputs.push(curve_csv);
            }
            Err(e) => stage.stat(&format!("{scope}/curve_skipped"), e.to_string()),
        }
        stage.stat(&format!("{scope}/n_texts"), analysis.n_texts);
        stage.stat(&format!("{scope}/n_words"), analysis.stats.len());
        stage.stat(&format!("{scope}/n_excluded"), analysis.excluded.len());
    }
    Ok(stage)
}

const LABEL_SCOPES: [&str; 3] = ["combined", "political", "general"];

fn label_scope_texts<'a>(texts: &'a [TextUnit], scope: &str) -> Vec<&'a TextUnit> {
    texts
        .iter()
        .filter(|t| match scope {
            "political" => t.category.is_political(),
            "general" => !t.category.is_political(),
            _ => true,
        })
        .collect()
}

/// Dense embedding rows, zero entries dropped.
fn embedding_matrix(texts: &[&TextUnit], provider: &dyn EmbeddingProvider) -> Result<FeatureMatrix, PipelineError> {
    let bodies: Vec<&str> = texts.iter().map(|t| t.body.as_str()).collect();
    let vectors = embed_texts(&bodies, provider, &EmbeddingCache::new()).map_err(|e| PipelineError::stage("baseline", e))?;
    let rows = vectors
        .iter()
        .map(|v| v.values().iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(j, x)| (j, *x)).collect())
        .collect();
    Ok(FeatureMatrix { rows, n_cols: provider.dim(), empty_rows: vec![] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoliticalSplitFile {
    pub heldout_f1: f64,
    pub split: PoliticalSplit,
}

pub(crate) fn baseline(run: &Run) -> Result<Stage, PipelineError> {
    let bc = &run.config.baseline;
    let seed = run.config.seed;
    let mut stage = Stage::default();
    let corpus = load_ingested(run, &mut stage)?;
    let gold = gold_map(&corpus);
    let params = TfidfParams { min_df: bc.min_df, ..TfidfParams::default() };
    let provider = match run.config.embedding.provider {
        EmbeddingKind::None => None,
        _ => Some(embedder(run)?),
    };
    let tfidf_specs = [ModelSpec::NaiveBayes { alpha: bc.nb_alpha }, ModelSpec::Logistic(bc.logistic)];
    let mut rows = Vec::new();
    for scope in LABEL_SCOPES {
        let texts: Vec<&TextUnit> = label_scope_texts(&corpus.texts, scope).into_iter().filter(|t| gold.contains_key(&t.user_id)).collect();
        let labels: Vec<usize> = texts.iter().map(|t| gold[&t.user_id].index()).collect();
        let users: Vec<String> = texts.iter().map(|t| t.user_id.clone()).collect();
        let bodies: Vec<&str> = texts.iter().map(|t| t.body.as_str()).collect();
        let dense = match (&provider, texts.is_empty()) {
            (Some(p), false) => Some(embedding_matrix(&texts, p.as_ref())?),
            _ => None,
        };
        for level in [CvLevel::Text, CvLevel::User] {
            let fold_seed = derive_seed(seed, &format!("baseline/{scope}/{}", level.as_str()));
            let groups = (level == CvLevel::User).then_some(users.as_slice());
            let split = match stratified_folds(&labels, bc.folds, fold_seed, groups) {
                Ok(s) => s,
                Err(e) => {
                    for spec in tfidf_specs {
                        rows.push(BaselineRow::skipped(spec.name(), "tfidf", level.as_str(), scope, &e.to_string()));
                    }
                    continue;
                }
            };
            let users_opt = Some(users.as_slice());
            for spec in tfidf_specs {
                let f = Features::Tfidf { texts: &bodies, params: &params };
                rows.push(match cross_validate(&spec, &f, &labels, &split, level, users_opt) {
                    Ok(r) => BaselineRow::from_cv(&r, scope, TFIDF_FORMULA),
                    Err(e) => BaselineRow::skipped(spec.name(), "tfidf", level.as_str(), scope, &e.to_string()),
                });
            }
            let gspec = ModelSpec::GaussianNb { var_smoothing: bc.var_smoothing };
            rows.push(match &dense {
                None => BaselineRow::skipped("gaussian_nb", "embedding", level.as_str(), scope, "no embedding provider configured"),
                Some(x) => match cross_validate::<&str>(&gspec, &Features::Dense(x), &labels, &split, level, users_opt) {
                    Ok(r) => BaselineRow::from_cv(&r, scope, &format!("{:?} embeddings", run.config.embedding.provider).to_lowercase()),
                    Err(e) => BaselineRow::skipped("gaussian_nb", "embedding", level.as_str(), scope, &e.to_string()),
                },
            });
        }
    }
    let csv = run.path(BASELINE_CSV);
    write_baseline_csv(&csv, &rows).map_err(|e| PipelineError::stage("baseline", e))?;
    stage.outputs.push(csv);
    for r in &rows {
        stage.stat(&format!("f1/{}/{}/{}/{}", r.label_scope, r.level, r.representation, r.model), r.mean_f1);
    }

    let (clf, split, candidates) =
        select_political_content_classifier(&corpus.texts, &bc.political_models, &params, derive_seed(seed, "political"))
            .map_err(|e| PipelineError::stage("baseline", e))?;
    for (name, f1) in &candidates {
        stage.stat(&format!("political_candidate_f1/{name}"), *f1);
    }
    stage.stat("political_model", clf.spec.name());
    let model = run.path(POLITICAL_MODEL);
    ensure_parent(&model)?;
    clf.save(&model).map_err(|e| PipelineError::stage("baseline", e))?;
    let split_path = run.path(POLITICAL_SPLIT);
    let body = PoliticalSplitFile { heldout_f1: clf.heldout_f1, split };
    write_json(&split_path, &Stamped { config_hash: run.config_hash(), seed, body })?;
    stage.outputs.extend([model, split_path]);
    stage.stat("political_heldout_f1", clf.heldout_f1);
    Ok(stage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfter {
    pub level: String,
    pub method: Option<AggregationMethod>,
    pub f1_before: Option<f64>,
    pub n_before: usize,
    pub f1_after: Option<f64>,
    pub n_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBody {
    pub classifier_heldout_f1: f64,
    pub n_evaluation_users: usize,
    pub removal: RemovalStats,
    pub comparisons: Vec<BeforeAfter>,
}

fn score(pairs: &[(PartyLabel, PartyLabel)]) -> Option<f64> {
    (!pairs.is_empty()).then(|| ConfusionMatrix::from_pairs(pairs).macro_f1())
}

pub(crate) fn sensitivity(run: &Run) -> Result<Stage, PipelineError> {
    let mut stage = Stage::default();
    let model_path = run.path(POLITICAL_MODEL);
    let split_path = run.path(POLITICAL_SPLIT);
    let clf = PoliticalClassifier::load(require(&model_path)?).map_err(|e| PipelineError::stage("sensitivity", e))?;
    let split: Stamped<PoliticalSplitFile> = read_json(&split_path)?;
    stage.inputs.extend([model_path, split_path]);
    let preds = read_predictions(run, &mut stage)?;
    let corpus = load_ingested(run, &mut stage)?;
    let gold = gold_map(&corpus);
    let eval_users = &split.body.split.evaluation_users;

    let general: Vec<TextUnit> = corpus
        .texts
        .iter()
        .filter(|t| !t.category.is_political() && eval_users.contains(&t.user_id))
        .cloned()
        .collect();
    let confidence: HashMap<String, u8> =
        preds.iter().filter_map(|p| p.answer().map(|(_, c)| (p.text_id.clone(), c))).collect();
    let outcome = sensitivity_filter(&general, &clf, &confidence);

    let ans = answers(&preds);
    let keep = |ids: &BTreeSet<&str>| -> Vec<Answer> { ans.iter().filter(|a| ids.contains(a.line.text_id.as_str())).copied().collect() };
    let before_ids: BTreeSet<&str> = general.iter().map(|t| t.text_id.as_str()).collect();
    let after_ids: BTreeSet<&str> = outcome.retained.iter().map(|t| t.text_id.as_str()).collect();
    let (before, after) = (keep(&before_ids), keep(&after_ids));
    let text_pairs = |a: &[Answer]| -> Vec<(PartyLabel, PartyLabel)> {
        a.iter().filter_map(|x| gold.get(&x.line.user_id).map(|&g| (g, x.party))).collect()
    };
    let (tb, ta) = (text_pairs(&before), text_pairs(&after));
    let mut comparisons =
        vec![BeforeAfter { level: "text".into(), method: None, f1_before: score(&tb), n_before: tb.len(), f1_after: score(&ta), n_after: ta.len() }];
    for &m in &run.config.aggregate.methods {
        let user_pairs = |a: &[Answer]| -> Result<Vec<(PartyLabel, PartyLabel)>, PipelineError> {
            let verdicts = aggregate_users(&answers_by_user(a, "general"), m).map_err(|e| PipelineError::stage("sensitivity", e))?;
            Ok(verdicts.iter().filter_map(|v| Some((*gold.get(&v.user_id)?, v.party?))).collect())
        };
        let (ub, ua) = (user_pairs(&before)?, user_pairs(&after)?);
        comparisons.push(BeforeAfter {
            level: "user".into(),
            method: Some(m),
            f1_before: score(&ub),
            n_before: ub.len(),
            f1_after: score(&ua),
            n_after: ua.len(),
        });
    }

    stage.stat("removed_fraction", outcome.stats.removed_fraction);
    stage.stat("mean_confidence_removed", outcome.stats.mean_confidence_removed);
    stage.stat("mean_confidence_retained", outcome.stats.mean_confidence_retained);
    let body = SensitivityBody {
        classifier_heldout_f1: clf.heldout_f1,
        n_evaluation_users: eval_users.len(),
        removal: outcome.stats,
        comparisons,
    };
    let path = run.path(SENSITIVITY);
    write_json(&path, &Stamped { config_hash: run.config_hash(), seed: run.config.seed, body })?;
    stage.outputs.push(path);
    Ok(stage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub commands: Vec<String>,
    pub f1: BTreeMap<String, f64>,
    pub se: BTreeMap<String, f64>,
    pub p_values: BTreeMap<String, f64>,
    pub proximity: Option<BTreeMap<String, CorrelationSummary>>,
    pub baseline: Option<Vec<BaselineRow>>,
    pub sensitivity: Option<SensitivityBody>,
}

/// Checks that every manifest comes from this config and that its outputs
/// are unchanged on disk.
fn check_manifests(run: &Run) -> Result<BTreeMap<String, Manifest>, PipelineError> {
    let manifests = Manifest::read_all(run.out_dir())?;
    let expected = run.config_hash();
    let report = Command::Report.as_str();
    for (name, m) in manifests.iter().filter(|(n, _)| n.as_str() != report) {
        if m.config_hash != expected {
            return Err(PipelineError::ConfigMismatch(format!(
                "{name} was produced by config {} but this run is {}",
                &m.config_hash[..12],
                &expected[..12]
            )));
        }
        for f in &m.outputs {
            let path = run.out_dir().join(&f.path);
            let (sha, _) = sha256_file(require(&path)?)?;
            if sha != f.sha256 {
                return Err(PipelineError::ConfigMismatch(format!("{} changed after {name} wrote it", f.path)));
            }
        }
    }
    Ok(manifests)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

pub(crate) fn report(run: &Run) -> Result<Stage, PipelineError> {
    let mut stage = Stage::default();
    let manifests = check_manifests(run)?;
    let reports = read_eval(run, &mut stage)?;
    let mut body = ReportBody {
        commands: manifests.keys().filter(|k| k.as_str() != "report").cloned().collect(),
        f1: reports.iter().map(|r| (r.scope.clone(), r.macro_f1)).collect(),
        se: reports.iter().filter_map(|r| Some((r.scope.clone(), r.se?))).collect(),
        p_values: reports.iter().filter_map(|r| Some((r.scope.clone(), r.p_value?))).collect(),
        proximity: None,
        baseline: None,
        sensitivity: None,
    };
    let prox = run.path(PROXIMITY_SUMMARY);
    if prox.exists() {
        let p: Stamped<ProximityBody> = read_json(&prox)?;
        body.proximity = Some(p.body.correlations);
        stage.inputs.push(prox);
    }
    let base = run.path(BASELINE_CSV);
    if base.exists() {
        let mut r = csv::Reader::from_path(&base).map_err(|e| PipelineError::io(&base, e))?;
        let rows: Result<Vec<BaselineRow>, _> = r.deserialize().collect();
        body.baseline = Some(rows.map_err(|e| PipelineError::io(&base, e))?);
        stage.inputs.push(base);
    }
    let sens = run.path(SENSITIVITY);
    if sens.exists() {
        let s: Stamped<SensitivityBody> = read_json(&sens)?;
        body.sensitivity = Some(s.body);
        stage.inputs.push(sens);
    }

    let md = render_markdown(run, &reports, &body);
    let json = run.path(REPORT_JSON);
    let md_path = run.path(REPORT_MD);
    write_json(&json, &Stamped { config_hash: run.config_hash(), seed: run.config.seed, body })?;
    std::fs::write(&md_path, md).map_err(|e| PipelineError::io(&md_path, e))?;
    stage.outputs.extend([json, md_path]);
    stage.stat("n_manifests", manifests.len());
    Ok(stage)
}

fn render_markdown(run: &Run, reports: &[crate::metrics::EvalReport], body: &ReportBody) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Run report\n");
    let _ = writeln!(s, "config hash `{}`, seed {}\n", run.config_hash(), run.config.seed);
    let _ = writeln!(s, "## Macro F1\n\n| scope | n | F1 | SE | p (paired) | unresolved |\n|---|---|---|---|---|---|");
    for r in reports {
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {} | {} | {} |",
            r.scope,
            r.n,
            r.macro_f1,
            fmt_opt(r.se),
            fmt_opt(r.p_value),
            r.n_unresolved
        );
    }
    if let Some(c) = reports.iter().find(|r| r.scope.ends_with("/all/text")).and_then(|r| r.group_scores.as_ref()) {
        let _ = writeln!(s, "\n## Text F1 by confidence\n\n| confidence | n | F1 |\n|---|---|---|");
        for (g, sc) in c {
            let _ = writeln!(s, "| {g} | {} | {:.4} |", sc.n, sc.f1);
        }
    }
    if let Some(p) = &body.proximity {
        let _ = writeln!(s, "\n## Proximity to Politics vs per-category F1\n\n| similarity | r | p | n |\n|---|---|---|---|");
        for (col, c) in p {
            let _ = writeln!(s, "| {col} | {} | {} | {} |", fmt_opt(c.r), fmt_opt(c.p), c.n);
        }
    }
    if let Some(rows) = &body.baseline {
        let _ = writeln!(s, "\n## Baselines\n\n| model | features | level | labels | F1 | sd |\n|---|---|---|---|---|---|");
        for r in rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                r.model,
                r.representation,
                r.level,
                r.label_scope,
                fmt_opt(r.mean_f1),
                fmt_opt(r.sd)
            );
        }
    }
    if let Some(x) = &body.sensitivity {
        let _ = writeln!(
            s,
            "\n## Sensitivity filter\n\nremoved {} of {} general texts ({:.3}); mean confidence removed {} vs retained {}\n",
            x.removal.n_removed,
            x.removal.n_input,
            x.removal.removed_fraction,
            fmt_opt(x.removal.mean_confidence_removed),
            fmt_opt(x.removal.mean_confidence_retained)
        );
        let _ = writeln!(s, "| level | method | F1 before | F1 after |\n|---|---|---|---|");
        for c in &x.comparisons {
            let m = c.method.map_or("-", AggregationMethod::as_str);
            let _ = writeln!(s, "| {} | {m} | {} | {} |", c.level, fmt_opt(c.f1_before), fmt_opt(c.f1_after));
        }
    }
    s
}
