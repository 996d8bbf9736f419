use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::MetricsError;
use crate::rng::indexed_stream;

pub const DEFAULT_REPLICATES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// The statistic on the full sample; for the paired test, the t value.
    pub statistic: f64,
    /// Standard deviation of the replicate statistics.
    pub se: f64,
    pub n_replicates: usize,
    pub p_value: Option<f64>,
    pub seed: u64,
    /// Mean paired difference (b - a) on the full sample; paired test only.
    pub estimate: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    // the mean of identical values can round away from them
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Replicate statistics. Replicate `r` draws its indices from ChaCha stream
/// `r` of `seed`, so the output is independent of evaluation order.
fn replicates<T>(units: &[T], statistic: &dyn Fn(&[&T]) -> f64, n_replicates: usize, seed: u64) -> Vec<f64> {
    let n = units.len();
    let mut sample: Vec<&T> = Vec::with_capacity(n);
    (0..n_replicates)
        .map(|r| {
            let mut rng = indexed_stream(seed, r as u64);
            sample.clear();
            sample.extend((0..n).map(|_| &units[rng.gen_range(0..n)]));
            statistic(&sample)
        })
        .collect()
}

fn validate(n: usize, n_replicates: usize, what: &'static str) -> Result<(), MetricsError> {
    if n < 2 {
        return Err(MetricsError::TooFew(what, 2));
    }
    if n_replicates < 1 {
        return Err(MetricsError::NoReplicates);
    }
    Ok(())
}

/// Nonparametric bootstrap of an arbitrary statistic over resampled units.
pub fn bootstrap<T>(
    units: &[T],
    statistic: impl Fn(&[&T]) -> f64,
    n_replicates: usize,
    seed: u64,
) -> Result<BootstrapResult, MetricsError> {
    validate(units.len(), n_replicates, "bootstrap")?;
    let full: Vec<&T> = units.iter().collect();
    let reps = replicates(units, &statistic, n_replicates, seed);
    Ok(BootstrapResult {
        statistic: statistic(&full),
        se: sample_sd(&reps),
        n_replicates,
        p_value: None,
        seed,
        estimate: None,
    })
}

/// Bootstrap standard error of the mean of per-unit scores.
pub fn bootstrap_se(values: &[f64], n_replicates: usize, seed: u64) -> Result<BootstrapResult, MetricsError> {
    bootstrap(values, |s| s.iter().copied().sum::<f64>() / s.len() as f64, n_replicates, seed)
}

/// Paired test of `b - a` by resampling users.
///
/// Each replicate takes the mean paired difference; the statistic is the
/// mean of the replicate means over their standard deviation and the
/// p-value is the two-sided standard-normal tail.
pub fn bootstrap_paired_test(pairs: &[(f64, f64)], n_replicates: usize, seed: u64) -> Result<BootstrapResult, MetricsError> {
    validate(pairs.len(), n_replicates, "bootstrap_paired_test")?;
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| b - a).collect();
    let reps = replicates(&diffs, &|s: &[&f64]| s.iter().copied().sum::<f64>() / s.len() as f64, n_replicates, seed);
    let m = mean(&reps);
    let sd = sample_sd(&reps);
    let t = if sd > 0.0 {
        m / sd
    } else if m == 0.0 {
        0.0
    } else {
        m.signum() * f64::INFINITY
    };
    let p = if t.is_infinite() { 0.0 } else { erfc(t.abs() / std::f64::consts::SQRT_2) };
    Ok(BootstrapResult { statistic: t, se: sd, n_replicates, p_value: Some(p), seed, estimate: Some(mean(&diffs)) })
}
