use serde::{Deserialize, Serialize};

use super::nb::class_counts;
use super::{BaselineError, FeatureMatrix};

/// Two-class Gaussian Naive Bayes for dense real-valued features such as
/// embeddings. Each variance is inflated by `var_smoothing` times the largest
/// feature variance so constant features stay finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub var_smoothing: f64,
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

fn densify(row: &[(usize, f64)], n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for &(j, v) in row {
        d[j] = v;
    }
    d
}

impl GaussianNb {
    pub fn train(x: &FeatureMatrix, y: &[usize], var_smoothing: f64) -> Result<Self, BaselineError> {
        if x.n_rows() != y.len() {
            return Err(BaselineError::Shape(x.n_rows(), y.len()));
        }
        let n = class_counts(y);
        if let Some(c) = (0..2).find(|&c| n[c] == 0) {
            return Err(BaselineError::MissingClass(c));
        }
        let d = x.n_cols;
        let mut sum = [vec![0.0; d], vec![0.0; d]];
        let mut sq = [vec![0.0; d], vec![0.0; d]];
        for (row, &c) in x.rows.iter().zip(y) {
            for &(j, v) in row {
                if !v.is_finite() {
                    return Err(BaselineError::NonFinite);
                }
                sum[c][j] += v;
                sq[c][j] += v * v;
            }
        }
        let mean: [Vec<f64>; 2] = [0, 1].map(|c| sum[c].iter().map(|s| s / n[c] as f64).collect());
        let mut var: [Vec<f64>; 2] =
            [0, 1].map(|c| (0..d).map(|j| (sq[c][j] / n[c] as f64 - mean[c][j].powi(2)).max(0.0)).collect());
        // global per-feature variance sets the smoothing scale
        let total = y.len() as f64;
        let max_var = (0..d)
            .map(|j| {
                let m = (sum[0][j] + sum[1][j]) / total;
                (sq[0][j] + sq[1][j]) / total - m * m
            })
            .fold(0.0f64, f64::max);
        let eps = var_smoothing * max_var.max(f64::MIN_POSITIVE);
        var.iter_mut().flatten().for_each(|v| *v += eps);
        let log_prior = [(n[0] as f64 / total).ln(), (n[1] as f64 / total).ln()];
        Ok(GaussianNb { var_smoothing, log_prior, mean, var })
    }

    pub fn joint_log_likelihood(&self, row: &[(usize, f64)]) -> [f64; 2] {
        let x = densify(row, self.mean[0].len());
        [0, 1].map(|c| {
            self.log_prior[c]
                - 0.5
                    * x.iter()
                        .zip(&self.mean[c])
                        .zip(&self.var[c])
                        .map(|((xi, m), v)| (2.0 * std::f64::consts::PI * v).ln() + (xi - m).powi(2) / v)
                        .sum::<f64>()
        })
    }

    pub fn prob_one(&self, row: &[(usize, f64)]) -> f64 {
        let [a, b] = self.joint_log_likelihood(row);
        1.0 / (1.0 + (a - b).exp())
    }

    pub fn predict_row(&self, row: &[(usize, f64)]) -> usize {
        let [a, b] = self.joint_log_likelihood(row);
        usize::from(b > a)
    }
}
