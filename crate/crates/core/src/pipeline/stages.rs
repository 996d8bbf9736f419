//! The core chain: synth, ingest, infer, aggregate, eval.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::artifacts::*;
use super::{BackendKind, OfflineBackend, PipelineError, Run, Stage, EXIT_OK, EXIT_PARTIAL, EXIT_TRANSPORT};
use crate::aggregate::aggregate_users;
use crate::backend::{infer_batch, ChatBackend, CompletionBackend, MalformedReason, MockBackend, PredictionCache, PromptTemplate};
use crate::corpus::{
    filter_users_by_mean_score, load_corpus, load_titles, read_jsonl, tokenizer_by_name, undersample_active_users,
    write_corpus, write_jsonl, Corpus, PartyLabel, USERS_FILE, TEXTS_FILE,
};
use crate::http::ReqwestTransport;
use crate::metrics::{bootstrap, bootstrap_paired_test, grouped_f1, write_eval_csv, ConfusionMatrix, EvalReport};
use crate::rng::derive_seed;

const USER_AGENT: &str = concat!("polis-probe/", env!("CARGO_PKG_VERSION"));
const HTTP_TIMEOUT: Duration = Duration::from_secs(60);

pub(crate) fn synth(run: &Run) -> Result<Stage, PipelineError> {
    let dir = run.path(SYNTH_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    let s = crate::synth::generate(&run.config.synth);
    s.write(&dir).map_err(|e| PipelineError::stage("synth", e))?;
    let mut stage = Stage::default();
    for f in [USERS_FILE, TEXTS_FILE, TITLES_FILE, "truth.jsonl"] {
        stage.outputs.push(dir.join(f));
    }
    stage.stat("n_users", s.users.len());
    stage.stat("n_texts", s.texts.len());
    Ok(stage)
}

/// The ingested corpus in `<out>/corpus`.
pub(crate) fn load_ingested(run: &Run, stage: &mut Stage) -> Result<Corpus, PipelineError> {
    let dir = run.path(CORPUS_DIR);
    let users = dir.join(USERS_FILE);
    let texts = dir.join(TEXTS_FILE);
    require(&users)?;
    require(&texts)?;
    let tok = tokenizer_by_name(&run.config.corpus.tokenizer).map_err(|e| PipelineError::Validation(e.to_string()))?;
    let corpus = load_corpus(&dir, run.config.corpus.source, tok.as_ref()).map_err(|e| PipelineError::stage("corpus", e))?;
    stage.inputs.extend([users, texts]);
    Ok(corpus)
}

pub(crate) fn gold_map(corpus: &Corpus) -> HashMap<String, PartyLabel> {
    corpus.users.iter().map(|u| (u.user_id.clone(), u.party)).collect()
}

pub(crate) fn ingest(run: &Run) -> Result<Stage, PipelineError> {
    let cfg = &run.config.corpus;
    let mut stage = Stage::default();
    let users_in = cfg.dir.join(USERS_FILE);
    let texts_in = cfg.dir.join(TEXTS_FILE);
    require(&users_in)?;
    require(&texts_in)?;
    let tok = tokenizer_by_name(&cfg.tokenizer).map_err(|e| PipelineError::Validation(e.to_string()))?;
    let corpus = load_corpus(&cfg.dir, cfg.source, tok.as_ref()).map_err(|e| PipelineError::Validation(e.to_string()))?;
    stage.inputs.extend([users_in, texts_in]);
    let n_loaded = corpus.texts.len();

    let mut users = corpus.users;
    if let Some(t) = cfg.min_mean_score {
        users = filter_users_by_mean_score(&users, t).map_err(|e| PipelineError::Validation(e.to_string()))?;
    }
    let kept: std::collections::HashSet<&str> = users.iter().map(|u| u.user_id.as_str()).collect();
    let mut texts: Vec<_> = corpus.texts.into_iter().filter(|t| kept.contains(t.user_id.as_str())).collect();
    if let Some(cap) = cfg.undersample_cap {
        texts = undersample_active_users(&texts, cap, derive_seed(run.config.seed, "undersample"))
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
    }
    // users left without texts carry no signal
    let with_texts: std::collections::HashSet<&str> = texts.iter().map(|t| t.user_id.as_str()).collect();
    users.retain(|u| with_texts.contains(u.user_id.as_str()));
    if texts.is_empty() {
        return Err(PipelineError::Validation("corpus is empty after filtering".into()));
    }
    let corpus = Corpus::new(cfg.source, users, texts);

    let dir = run.path(CORPUS_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    write_corpus(&dir, &corpus).map_err(|e| PipelineError::stage("ingest", e))?;
    stage.outputs.extend([dir.join(USERS_FILE), dir.join(TEXTS_FILE)]);

    let titles_src = cfg.titles.clone().or_else(|| Some(cfg.dir.join(TITLES_FILE)).filter(|p| p.exists()));
    if let Some(src) = titles_src {
        let titles = load_titles(require(&src)?).map_err(|e| PipelineError::Validation(e.to_string()))?;
        let groups: std::collections::BTreeSet<&str> = corpus.texts.iter().map(|t| t.group_key.as_str()).collect();
        #[derive(Serialize)]
        struct TitleLine<'a> {
            group_key: &'a str,
            title: &'a str,
        }
        let dst = dir.join(TITLES_FILE);
        let lines = titles.iter().filter(|(g, _)| groups.contains(g.as_str())).map(|(g, t)| TitleLine { group_key: g, title: t });
        write_jsonl(&dst, lines).map_err(|e| PipelineError::stage("ingest", e))?;
        stage.inputs.push(src);
        stage.outputs.push(dst);
    }
    let summary = dir.join("manifest.json");
    write_json(&summary, &corpus.manifest)?;
    stage.outputs.push(summary);

    stage.stat("n_texts_loaded", n_loaded);
    stage.stat("n_texts", corpus.texts.len());
    stage.stat("n_users", corpus.users.len());
    stage.stat("source", cfg.source.as_str());
    Ok(stage)
}

fn backend_for(run: &Run) -> Result<Box<dyn CompletionBackend>, PipelineError> {
    let cfg = &run.config;
    Ok(match (cfg.inference.backend, run.offline) {
        // the mock always answers under its own model id so its answers can
        // never be mistaken for a real model's in a shared cache
        (BackendKind::Mock, _) => Box::new(MockBackend::default()),
        (BackendKind::Http, true) => Box::new(OfflineBackend::new(&cfg.backend.model_id)),
        (BackendKind::Http, false) => {
            let transport = ReqwestTransport::new(HTTP_TIMEOUT, USER_AGENT).map_err(|e| PipelineError::Transport(e.0))?;
            Box::new(ChatBackend::from_config(&cfg.backend, Arc::new(transport))?)
        }
    })
}

pub(crate) fn infer(run: &Run) -> Result<Stage, PipelineError> {
    let cfg = &run.config;
    let mut stage = Stage::default();
    let corpus = load_ingested(run, &mut stage)?;
    let template = PromptTemplate::resolve(&cfg.inference.template).map_err(|e| PipelineError::Validation(e.to_string()))?;
    let cache_path = cfg.backend.cache_path.clone().unwrap_or_else(|| run.path(DEFAULT_CACHE));
    ensure_parent(&cache_path)?;
    let cache = PredictionCache::open(&cache_path)?;
    let backend = backend_for(run)?;
    log::info!("infer: {} texts with {} ({})", corpus.texts.len(), backend.model_id(), template.versioned_id());
    let outcome = infer_batch(&corpus.texts, &template, backend.as_ref(), &cfg.backend, &cache)?;

    let version = template.versioned_id();
    let lines: Vec<PredictionLine> = corpus
        .texts
        .iter()
        .zip(&outcome.results)
        .map(|(t, (_, r))| PredictionLine::new(t, r, backend.model_id(), &version))
        .collect();
    let path = run.path(PREDICTIONS);
    write_jsonl(&path, &lines).map_err(|e| PipelineError::stage("infer", e))?;
    stage.outputs.push(path);

    let n = lines.len();
    let malformed = outcome
        .results
        .iter()
        .filter(|(_, r)| r.as_ref().is_err_and(|m| m.reason != MalformedReason::Transport))
        .count();
    let answered = outcome.results.iter().filter(|(_, r)| r.is_ok()).count();
    let malformed_share = malformed as f64 / n.max(1) as f64;
    stage.exit_code = if outcome.transport_failures > 0 {
        log::error!("{} texts could not be fetched", outcome.transport_failures);
        EXIT_TRANSPORT
    } else if malformed_share > cfg.inference.malformed_threshold {
        log::warn!("malformed share {malformed_share:.3} exceeds {}", cfg.inference.malformed_threshold);
        EXIT_PARTIAL
    } else {
        EXIT_OK
    };
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for l in &lines {
        if let Some(r) = &l.malformed {
            *reasons.entry(r.clone()).or_default() += 1;
        }
    }
    stage.stat("n_texts", n);
    stage.stat("answered", answered);
    stage.stat("answer_ratio", answered as f64 / n.max(1) as f64);
    stage.stat("malformed", malformed);
    stage.stat("malformed_reasons", serde_json::to_value(reasons).expect("counts serialize"));
    stage.stat("transport_failures", outcome.transport_failures);
    stage.stat("backend_calls", outcome.backend_calls);
    stage.stat("cache_hits", outcome.cache_hits);
    stage.stat("network", backend.is_network());
    stage.stat("model_id", backend.model_id());
    stage.stat("template_version", version);
    Ok(stage)
}

pub(crate) fn read_predictions(run: &Run, stage: &mut Stage) -> Result<Vec<PredictionLine>, PipelineError> {
    let path = run.path(PREDICTIONS);
    let lines = read_jsonl(require(&path)?).map_err(|e| PipelineError::stage("predictions", e))?;
    stage.inputs.push(path);
    Ok(lines)
}

pub(crate) fn read_verdicts(run: &Run, stage: &mut Stage) -> Result<Vec<VerdictLine>, PipelineError> {
    let path = run.path(VERDICTS);
    let lines = read_jsonl(require(&path)?).map_err(|e| PipelineError::stage("verdicts", e))?;
    stage.inputs.push(path);
    Ok(lines)
}

/// Well-formed answers in `scope`, grouped by user.
pub(crate) fn answers_by_user<'a>(ans: &[Answer<'a>], scope: &str) -> BTreeMap<String, Vec<Answer<'a>>> {
    let mut by_user: BTreeMap<String, Vec<Answer>> = BTreeMap::new();
    for a in ans.iter().filter(|a| in_scope(scope, a.line.category)) {
        by_user.entry(a.line.user_id.clone()).or_default().push(*a);
    }
    by_user
}

pub(crate) fn aggregate(run: &Run) -> Result<Stage, PipelineError> {
    let mut stage = Stage::default();
    let preds = read_predictions(run, &mut stage)?;
    let ans = answers(&preds);
    let mut out = Vec::new();
    let mut counts = BTreeMap::new();
    for scope in SCOPES {
        let by_user = answers_by_user(&ans, scope);
        for &m in &run.config.aggregate.methods {
            let verdicts = aggregate_users(&by_user, m).map_err(|e| PipelineError::stage("aggregate", e))?;
            let unresolved = verdicts.iter().filter(|v| v.party.is_none()).count();
            counts.insert(format!("{scope}/{m}"), serde_json::json!({"users": verdicts.len(), "unresolved": unresolved}));
            out.extend(verdicts.into_iter().map(|verdict| VerdictLine { scope: scope.to_string(), verdict }));
        }
    }
    let path = run.path(VERDICTS);
    write_jsonl(&path, &out).map_err(|e| PipelineError::stage("aggregate", e))?;
    stage.outputs.push(path);
    stage.stat("verdicts", serde_json::to_value(counts).expect("counts serialize"));
    Ok(stage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBody {
    pub reports: Vec<EvalReport>,
}

pub const PAIRED_TEST_RECIPE: &str = "per resolved user: a = accuracy of the user's text-level predictions in scope, \
b = 1 if the user-level verdict is correct else 0; users resampled with replacement; statistic = mean of replicate \
mean differences (b - a) over their standard deviation; p = two-sided standard normal tail";

fn f1_of(pairs: &[&(PartyLabel, PartyLabel)]) -> f64 {
    ConfusionMatrix::from_pairs(pairs.iter().copied()).macro_f1()
}

/// Bootstrap SE of macro F1 over `pairs`, or `None` below two units.
fn f1_se(pairs: &[(PartyLabel, PartyLabel)], n: usize, seed: u64) -> Option<f64> {
    (pairs.len() >= 2).then(|| bootstrap(pairs, f1_of, n, seed).expect("validated sizes").se)
}

pub(crate) fn eval(run: &Run) -> Result<Stage, PipelineError> {
    let cfg = &run.config;
    let mut stage = Stage::default();
    let preds = read_predictions(run, &mut stage)?;
    let verdicts = read_verdicts(run, &mut stage)?;
    let corpus = load_ingested(run, &mut stage)?;
    let gold = gold_map(&corpus);
    let src = corpus.source().as_str();
    let ans = answers(&preds);
    let b = cfg.eval.n_replicates;
    let mut reports = Vec::new();

    for scope in SCOPES {
        let in_sc: Vec<&Answer> =
            ans.iter().filter(|a| in_scope(scope, a.line.category) && gold.contains_key(&a.line.user_id)).collect();
        if in_sc.is_empty() {
            stage.stat(&format!("skipped/{scope}"), "no answered texts in scope");
            continue;
        }
        let pairs: Vec<(PartyLabel, PartyLabel)> = in_sc.iter().map(|a| (gold[&a.line.user_id], a.party)).collect();
        let mut r = EvalReport::new(format!("{src}/{scope}/text"), ConfusionMatrix::from_pairs(&pairs));
        let by_conf: Vec<(String, PartyLabel, PartyLabel)> =
            in_sc.iter().map(|a| (a.confidence.to_string(), gold[&a.line.user_id], a.party)).collect();
        r.group_scores = Some(grouped_f1(&by_conf, cfg.eval.min_group_support).expect("non-empty"));
        r.se = f1_se(&pairs, b, derive_seed(cfg.seed, &format!("eval/{scope}/text")));
        let scoped = preds.iter().filter(|p| in_scope(scope, p.category)).count();
        r.n_unresolved = scoped - in_sc.len();
        r.notes.insert("answer_ratio".into(), format!("{}", in_sc.len() as f64 / scoped as f64));
        r.notes.insert("groups".into(), "model-reported confidence".into());
        reports.push(r);

        if scope == "all" {
            let by_cat: Vec<(String, PartyLabel, PartyLabel)> =
                in_sc.iter().map(|a| (a.line.category.name().to_string(), gold[&a.line.user_id], a.party)).collect();
            let mut c = EvalReport::new(format!("{src}/by_category/text"), ConfusionMatrix::from_pairs(&pairs));
            c.group_scores = Some(grouped_f1(&by_cat, cfg.eval.min_group_support).expect("non-empty"));
            c.notes.insert("groups".into(), "text category".into());
            reports.push(c);
        }

        // per-user text accuracy, the `a` side of the paired test
        let mut acc: HashMap<&str, (usize, usize)> = HashMap::new();
        for a in &in_sc {
            let e = acc.entry(a.line.user_id.as_str()).or_default();
            e.0 += usize::from(gold[&a.line.user_id] == a.party);
            e.1 += 1;
        }
        for &m in &cfg.aggregate.methods {
            let vs: Vec<&VerdictLine> = verdicts
                .iter()
                .filter(|v| v.scope == scope && v.verdict.method == m && gold.contains_key(&v.verdict.user_id))
                .collect();
            if vs.is_empty() {
                continue;
            }
            let resolved: Vec<(&str, PartyLabel, PartyLabel)> = vs
                .iter()
                .filter_map(|v| v.verdict.party.map(|p| (v.verdict.user_id.as_str(), gold[&v.verdict.user_id], p)))
                .collect();
            let pairs: Vec<(PartyLabel, PartyLabel)> = resolved.iter().map(|&(_, t, p)| (t, p)).collect();
            let mut r = EvalReport::new(format!("{src}/{scope}/user/{m}"), ConfusionMatrix::from_pairs(&pairs));
            r.n_unresolved = vs.len() - resolved.len();
            let seed = derive_seed(cfg.seed, &format!("eval/{scope}/user/{m}"));
            r.se = f1_se(&pairs, b, seed);
            let paired: Vec<(f64, f64)> = resolved
                .iter()
                .filter_map(|&(u, t, p)| acc.get(u).map(|&(ok, n)| (ok as f64 / n as f64, f64::from(u8::from(t == p)))))
                .collect();
            if paired.len() >= 2 {
                let test = bootstrap_paired_test(&paired, b, derive_seed(seed, "paired")).expect("validated sizes");
                r.p_value = test.p_value;
                r.notes.insert("paired_t".into(), format!("{}", test.statistic));
                r.notes.insert("paired_estimate".into(), format!("{}", test.estimate.unwrap_or(f64::NAN)));
                r.notes.insert("paired_test".into(), format!("{PAIRED_TEST_RECIPE}; B = {b}"));
            }
            r.notes.insert(
                "unresolved_rate".into(),
                format!("{}", r.n_unresolved as f64 / vs.len() as f64),
            );
            reports.push(r);
        }
    }
    if reports.is_empty() {
        return Err(PipelineError::stage("eval", "nothing to evaluate: no answered texts"));
    }

    let json = run.path(EVAL_JSON);
    let csv = run.path(EVAL_CSV);
    write_json(&json, &Stamped { config_hash: run.config_hash(), seed: cfg.seed, body: EvalBody { reports: reports.clone() } })?;
    write_eval_csv(&csv, &reports).map_err(|e| PipelineError::stage("eval", e))?;
    stage.outputs.extend([json, csv]);
    for r in &reports {
        stage.stat(&format!("f1/{}", r.scope), r.macro_f1);
    }
    Ok(stage)
}

pub(crate) fn read_eval(run: &Run, stage: &mut Stage) -> Result<Vec<EvalReport>, PipelineError> {
    let path = run.path(EVAL_JSON);
    let body: Stamped<EvalBody> = read_json(&path)?;
    stage.inputs.push(path);
    Ok(body.body.reports)
}
