use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LexicalError;

/// Informative Dirichlet prior: per-word pseudo-counts from a background
/// corpus and their total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPrior {
    alpha_w: BTreeMap<String, f64>,
    alpha_0: f64,
}

impl DirichletPrior {
    pub fn new(alpha_w: BTreeMap<String, f64>) -> Self {
        let alpha_0 = alpha_w.values().sum();
        DirichletPrior { alpha_w, alpha_0 }
    }

    pub fn from_counts(counts: &BTreeMap<String, u64>) -> Self {
        DirichletPrior::new(counts.iter().map(|(k, &v)| (k.clone(), v as f64)).collect())
    }

    pub fn alpha(&self, token: &str) -> f64 {
        self.alpha_w.get(token).copied().unwrap_or(0.0)
    }

    pub fn alpha_0(&self) -> f64 {
        self.alpha_0
    }

    pub fn alpha_w(&self) -> &BTreeMap<String, f64> {
        &self.alpha_w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogOdds {
    pub log_odds: f64,
    pub se: f64,
    pub z: f64,
}

/// Posterior-minus-prior log-odds of one word, its approximate standard
/// error and the standardized score.
pub(crate) fn log_odds_one(x: f64, n: f64, alpha_w: f64, alpha_0: f64) -> LogOdds {
    let rest_prior = alpha_0 - alpha_w;
    let log_odds = ((x + alpha_w) / ((n - x) + rest_prior)).ln() - (alpha_w / rest_prior).ln();
    let se = (1.0 / (x + alpha_w) + 1.0 / ((n - x) + rest_prior) + 1.0 / alpha_w + 1.0 / rest_prior).sqrt();
    LogOdds { log_odds, se, z: log_odds / se }
}

/// Log-odds statistics for every token against `prior`. Tokens without
/// background mass make the prior odds undefined and are an error.
pub fn log_odds_z<'a>(
    tokens: impl IntoIterator<Item = &'a String>,
    category_counts: &BTreeMap<String, u64>,
    n_a: u64,
    prior: &DirichletPrior,
) -> Result<BTreeMap<String, LogOdds>, LexicalError> {
    let mut out = BTreeMap::new();
    for token in tokens {
        let x = category_counts.get(token).copied().unwrap_or(0);
        if x > n_a {
            return Err(LexicalError::CountExceedsTotal { token: token.clone(), count: x, total: n_a });
        }
        let a = prior.alpha(token);
        if a <= 0.0 || prior.alpha_0() - a <= 0.0 {
            return Err(LexicalError::ZeroPrior(token.clone()));
        }
        out.insert(token.clone(), log_odds_one(x as f64, n_a as f64, a, prior.alpha_0()));
    }
    Ok(out)
}

/// `p_rep / (p_rep + p_dem)` with each p the word's relative frequency
/// within that party's tokens. Tokens absent from both parties are dropped.
pub fn partisan_ratio(
    counts_rep: &BTreeMap<String, u64>,
    counts_dem: &BTreeMap<String, u64>,
) -> Result<BTreeMap<String, f64>, LexicalError> {
    let total_rep: u64 = counts_rep.values().sum();
    let total_dem: u64 = counts_dem.values().sum();
    if total_rep == 0 {
        return Err(LexicalError::EmptyParty("Republican"));
    }
    if total_dem == 0 {
        return Err(LexicalError::EmptyParty("Democratic"));
    }
    let mut out = BTreeMap::new();
    for token in counts_rep.keys().chain(counts_dem.keys()) {
        let r = counts_rep.get(token).copied().unwrap_or(0);
        let d = counts_dem.get(token).copied().unwrap_or(0);
        if r + d == 0 || out.contains_key(token) {
            continue;
        }
        let p_rep = r as f64 / total_rep as f64;
        let p_dem = d as f64 / total_dem as f64;
        out.insert(token.clone(), p_rep / (p_rep + p_dem));
    }
    Ok(out)
}

/// Equal-frequency bins 1..=k by ascending score, ties broken by token.
/// When the sizes cannot be equal the lowest bins take one extra token.
pub fn quantile_bins(scores: &BTreeMap<String, f64>, k: usize) -> Result<BTreeMap<String, usize>, LexicalError> {
    let n = scores.len();
    if k == 0 || n < k {
        return Err(LexicalError::TooFewTokens { tokens: n, bins: k });
    }
    let mut order: Vec<(&String, f64)> = scores.iter().map(|(t, &s)| (t, s)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let (base, rem) = (n / k, n % k);
    let mut out = BTreeMap::new();
    let mut it = order.into_iter();
    for bin in 1..=k {
        let size = base + usize::from(bin <= rem);
        for (token, _) in it.by_ref().take(size) {
            out.insert(token.clone(), bin);
        }
    }
    Ok(out)
}
