use serde::{Deserialize, Serialize};

use super::{BaselineError, FeatureMatrix};

/// Two-class multinomial Naive Bayes with additive smoothing. Accepts any
/// nonnegative features (counts or tf-idf weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialNb {
    pub alpha: f64,
    pub log_prior: [f64; 2],
    /// `log_cond[c][j] = ln((N_cj + alpha) / (N_c + alpha * V))`.
    pub log_cond: [Vec<f64>; 2],
}

pub(crate) fn class_counts(y: &[usize]) -> [usize; 2] {
    let mut n = [0; 2];
    for &c in y {
        n[c] += 1;
    }
    n
}

impl MultinomialNb {
    pub fn train(x: &FeatureMatrix, y: &[usize], alpha: f64) -> Result<Self, BaselineError> {
        if x.n_rows() != y.len() {
            return Err(BaselineError::Shape(x.n_rows(), y.len()));
        }
        let n = class_counts(y);
        if let Some(c) = (0..2).find(|&c| n[c] == 0) {
            return Err(BaselineError::MissingClass(c));
        }
        let v = x.n_cols;
        let mut feat = [vec![0.0; v], vec![0.0; v]];
        for (row, &c) in x.rows.iter().zip(y) {
            for &(j, val) in row {
                if val < 0.0 {
                    return Err(BaselineError::NegativeFeature);
                }
                feat[c][j] += val;
            }
        }
        let total = y.len() as f64;
        let log_cond = feat.map(|f| {
            let denom = f.iter().sum::<f64>() + alpha * v as f64;
            f.iter().map(|&x| ((x + alpha) / denom).ln()).collect()
        });
        Ok(MultinomialNb { alpha, log_prior: [(n[0] as f64 / total).ln(), (n[1] as f64 / total).ln()], log_cond })
    }

    /// Unnormalized log posterior of each class for one row.
    pub fn joint_log_likelihood(&self, row: &[(usize, f64)]) -> [f64; 2] {
        let mut out = self.log_prior;
        for (c, o) in out.iter_mut().enumerate() {
            *o += row.iter().map(|&(j, v)| v * self.log_cond[c][j]).sum::<f64>();
        }
        out
    }

    /// Posterior probability of class 1.
    pub fn prob_one(&self, row: &[(usize, f64)]) -> f64 {
        let [a, b] = self.joint_log_likelihood(row);
        1.0 / (1.0 + (a - b).exp())
    }

    pub fn predict_row(&self, row: &[(usize, f64)]) -> usize {
        let [a, b] = self.joint_log_likelihood(row);
        usize::from(b > a)
    }
}
