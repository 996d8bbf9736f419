use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic").canonicalize().unwrap()
}

/// Writes a config for the bundled corpus into `dir`, with `extra` appended.
fn config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "seed = 17\nout_dir = \"out\"\n\n[corpus]\ndir = \"{}\"\n\n[embedding]\nprovider = \"hashing\"\ndim = 64\n\n[eval]\nn_replicates = 200\n{extra}",
        data_dir().display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn probe(args: &[&str], envs: &[(&str, &str)]) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polis-probe"));
    cmd.args(args).env("NO_NETWORK", "1").env("RUST_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn run(cfg: &Path, command: &str, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, stderr) = probe(&args, &[]);
    if code != 0 {
        eprintln!("{command}: {stderr}");
    }
    code
}

fn manifest(out: &Path, command: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifests").join(format!("{command}.json"))).unwrap()).unwrap()
}

fn outputs(m: &Value) -> BTreeMap<String, String> {
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

const COMMANDS: [&str; 9] = ["ingest", "infer", "aggregate", "eval", "proximity", "lexical", "baseline", "sensitivity", "report"];

#[test]
fn full_run_is_reproducible_across_output_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&cfg, "all", &a, &[]), 0);
    assert_eq!(run(&cfg, "all", &b, &[]), 0);
    for c in COMMANDS {
        let (ma, mb) = (manifest(&a, c), manifest(&b, c));
        assert_eq!(ma["config_hash"], mb["config_hash"], "{c}");
        assert_eq!(ma["exit_code"], 0, "{c}");
        assert_eq!(outputs(&ma), outputs(&mb), "{c} outputs differ between runs");
    }
    for f in [
        "corpus/texts.jsonl",
        "predictions.jsonl",
        "verdicts.jsonl",
        "eval.json",
        "eval.csv",
        "proximity.csv",
        "proximity_summary.json",
        "lexical/general_wordstats.csv",
        "lexical/general_wordcloud.json",
        "lexical/general_quantiles.csv",
        "baseline_report.csv",
        "models/political_classifier.bin",
        "models/political_split.json",
        "sensitivity.json",
        "report.json",
        "report.md",
    ] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_hash"], manifest(&a, "ingest")["config_hash"]);
}

#[test]
fn eval_before_upstream_is_a_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, "eval", &out, &[]), 3);
    assert_eq!(run(&cfg, "ingest", &out, &[]), 0);
    assert_eq!(run(&cfg, "aggregate", &out, &[]), 3);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "\n[aggregate]\nmethods = []\n");
    assert_eq!(run(&cfg, "ingest", &dir.path().join("out"), &[]), 2);
    let cfg = config(dir.path(), "\n[eval]\nunknown_key = 1\n");
    assert_eq!(run(&cfg, "ingest", &dir.path().join("out"), &[]), 2);
    let cfg = config(dir.path(), "\n[backend]\nendpoint = \"${POLIS_TEST_UNSET_VARIABLE}\"\n");
    assert_eq!(run(&cfg, "ingest", &dir.path().join("out"), &[]), 2);
}

#[test]
fn offline_http_without_cache_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, "ingest", &out, &[]), 0);
    assert_eq!(run(&cfg, "infer", &out, &["--backend", "http"]), 4);
}

#[test]
fn offline_http_is_served_from_a_warm_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("shared-cache.jsonl");
    let cfg = config(dir.path(), &format!("\n[backend]\nmodel_id = \"mock-planted-v1\"\ncache_path = \"{}\"\n", cache.display()));
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, "ingest", &out, &[]), 0);
    assert_eq!(run(&cfg, "infer", &out, &[]), 0);
    let cold = manifest(&out, "infer");
    assert_eq!(run(&cfg, "infer", &out, &["--backend", "http"]), 0);
    let warm = manifest(&out, "infer");
    assert_eq!(warm["stats"]["backend_calls"], 0);
    assert_eq!(warm["stats"]["cache_hits"], cold["stats"]["backend_calls"]);
    assert_eq!(warm["stats"]["network"], false);
    assert_eq!(outputs(&warm), outputs(&cold));
}

#[test]
fn interpolated_values_never_reach_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let secret = "https://secret-host.invalid/v1/chat";
    let cfg = config(dir.path(), "\n[backend]\nendpoint = \"${POLIS_TEST_ENDPOINT}\"\n");
    let out = dir.path().join("out");
    let (code, stderr) =
        probe(&["ingest", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[("POLIS_TEST_ENDPOINT", secret)]);
    assert_eq!(code, 0, "{stderr}");
    let text = std::fs::read_to_string(out.join("manifests/ingest.json")).unwrap();
    assert!(!text.contains(secret));
    assert!(text.contains("${POLIS_TEST_ENDPOINT}"));
}

#[test]
fn report_refuses_foreign_or_modified_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "\n[analyses]\nproximity = false\nlexical = false\nbaseline = false\nsensitivity = false\n");
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, "all", &out, &[]), 0);
    assert_eq!(run(&cfg, "report", &out, &[]), 0);
    // a different seed is a different config
    assert_eq!(run(&cfg, "report", &out, &["--seed", "18"]), 2);
    // concurrency is not part of the config identity
    assert_eq!(run(&cfg, "report", &out, &["--concurrency", "2"]), 0);
    let eval = out.join("eval.csv");
    let mut text = std::fs::read_to_string(&eval).unwrap();
    text.push_str("tampered\n");
    std::fs::write(&eval, text).unwrap();
    assert_eq!(run(&cfg, "report", &out, &[]), 2);
}
