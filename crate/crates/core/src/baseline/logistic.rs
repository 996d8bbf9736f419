use serde::{Deserialize, Serialize};

use super::nb::class_counts;
use super::{BaselineError, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { l2: 1.0, max_iter: 1000, tol: 1e-6 }
    }
}

/// Binary L2-regularized logistic regression.
///
/// Objective: `Σ [ln(1 + e^z) - y z] + (l2/2) |w|²` with `z = w·x + b`;
/// the bias is not penalized. `l2 = 1` matches the usual `C = 1` default.
/// Duplicating every row while doubling `l2` leaves the minimizer unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub params: LogisticParams,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(row: &[(usize, f64)], w: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * w[j]).sum()
}

/// Objective value, weight gradient and bias gradient.
pub fn loss_and_grad(x: &FeatureMatrix, y: &[usize], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &yi) in x.rows.iter().zip(y) {
        let z = dot(row, w) + b;
        let yi = yi as f64;
        loss += softplus(z) - yi * z;
        let r = sigmoid(z) - yi;
        for &(j, v) in row {
            gw[j] += r * v;
        }
        gb += r;
    }
    for (g, wj) in gw.iter_mut().zip(w) {
        *g += l2 * wj;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, gw, gb)
}

/// Memory of the limited-memory BFGS approximation.
const LBFGS_MEMORY: usize = 10;
/// Relative loss decrease below which the optimizer is considered converged.
pub const LOSS_FTOL: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 60;

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS two-loop recursion: the search direction `-H g`.
fn lbfgs_direction(g: &[f64], hist: &std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dotv(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dotv(s, y) / dotv(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dotv(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

impl Logistic {
    /// L-BFGS with Armijo backtracking over the weights and bias jointly.
    /// Converged when the gradient norm drops below `tol` or a step no
    /// longer lowers the loss by more than [`LOSS_FTOL`] relative (the sum
    /// objective runs out of float precision before tiny `tol`s). Otherwise
    /// stops after `max_iter` steps with `converged = false`.
    pub fn train(x: &FeatureMatrix, y: &[usize], params: LogisticParams) -> Result<Self, BaselineError> {
        if x.n_rows() != y.len() {
            return Err(BaselineError::Shape(x.n_rows(), y.len()));
        }
        let n = class_counts(y);
        if let Some(c) = (0..2).find(|&c| n[c] == 0) {
            return Err(BaselineError::MissingClass(c));
        }
        if x.rows.iter().flatten().any(|(_, v)| !v.is_finite()) {
            return Err(BaselineError::NonFinite);
        }
        let d = x.n_cols;
        // theta = [w.., b]
        let eval = |theta: &[f64]| {
            let (l, mut g, gb) = loss_and_grad(x, y, &theta[..d], theta[d], params.l2);
            g.push(gb);
            (l, g)
        };
        let mut theta = vec![0.0; d + 1];
        let (mut loss, mut grad) = eval(&theta);
        let mut hist = std::collections::VecDeque::with_capacity(LBFGS_MEMORY);
        let mut iterations = 0;
        let mut gnorm = dotv(&grad, &grad).sqrt();
        let mut flat = false;
        while gnorm >= params.tol && iterations < params.max_iter {
            let mut dir = lbfgs_direction(&grad, &hist);
            let mut slope = dotv(&grad, &dir);
            if slope >= 0.0 {
                // lost descent; restart from steepest descent
                hist.clear();
                dir = grad.iter().map(|g| -g).collect();
                slope = -gnorm * gnorm;
            }
            let mut step = if hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
            let mut backtracks = 0;
            let (theta_new, loss_new, grad_new) = loop {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, p)| t + step * p).collect();
                let (l, g) = eval(&cand);
                if l <= loss + 1e-4 * step * slope || backtracks == MAX_BACKTRACKS {
                    break (cand, l, g);
                }
                step *= 0.5;
                backtracks += 1;
            };
            let s: Vec<f64> = theta_new.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dotv(&s, &yv);
            if sy > 1e-12 {
                if hist.len() == LBFGS_MEMORY {
                    hist.pop_front();
                }
                hist.push_back((s, yv, 1.0 / sy));
            }
            if loss_new > loss {
                // no acceptable step: keep the current point
                flat = true;
                break;
            }
            flat = (loss - loss_new) <= LOSS_FTOL * loss.abs().max(loss_new.abs()).max(1.0);
            theta = theta_new;
            loss = loss_new;
            grad = grad_new;
            gnorm = dotv(&grad, &grad).sqrt();
            iterations += 1;
            if flat {
                break;
            }
        }
        let converged = gnorm < params.tol || flat;
        if !converged {
            log::warn!("logistic regression stopped after {iterations} iterations with gradient norm {gnorm:.3e}");
        }
        let bias = theta.pop().expect("bias");
        Ok(Logistic { weights: theta, bias, converged, iterations, grad_norm: gnorm, params })
    }

    pub fn decision(&self, row: &[(usize, f64)]) -> f64 {
        dot(row, &self.weights) + self.bias
    }

    pub fn prob_one(&self, row: &[(usize, f64)]) -> f64 {
        sigmoid(self.decision(row))
    }

    pub fn predict_row(&self, row: &[(usize, f64)]) -> usize {
        usize::from(self.decision(row) > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix {
            rows: rows.iter().map(|r| r.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect()).collect(),
            n_cols: rows[0].len(),
            empty_rows: vec![],
        }
    }

    #[test]
    fn separable_toy() {
        let x = dense(&[vec![1.0, 0.1], vec![0.9, 0.3], vec![0.2, 1.0], vec![0.1, 0.8]]);
        let y = [1, 1, 0, 0];
        let m = Logistic::train(&x, &y, LogisticParams { l2: 0.01, ..Default::default() }).unwrap();
        assert!(m.converged);
        for (row, &yi) in x.rows.iter().zip(&y) {
            assert_eq!(m.predict_row(row), yi);
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let x = dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let m = Logistic::train(&x, &[1, 0], LogisticParams { l2: 1e-6, max_iter: 3, tol: 1e-12 }).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }

    #[test]
    fn duplicated_data_same_boundary() {
        let x = dense(&[vec![1.0, 0.5], vec![0.2, 0.9], vec![0.7, 0.7], vec![0.1, 0.3], vec![0.6, 0.1]]);
        let y = [1, 0, 1, 0, 0];
        let dup = FeatureMatrix { rows: [x.rows.clone(), x.rows.clone()].concat(), n_cols: 2, empty_rows: vec![] };
        let p = LogisticParams { l2: 0.1, max_iter: 5_000, tol: 1e-9 };
        let a = Logistic::train(&x, &y, p).unwrap();
        let b = Logistic::train(&dup, &[y, y].concat(), LogisticParams { l2: 0.2, ..p }).unwrap();
        assert!(a.converged && b.converged, "{} {}", a.grad_norm, b.grad_norm);
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-6);
        }
        assert!((a.bias - b.bias).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 2..8),
            labels in prop::collection::vec(0usize..2, 8),
            w in prop::collection::vec(-1.5f64..1.5, 3),
            b in -1.0f64..1.0,
            l2 in 0.0f64..2.0,
        ) {
            let x = dense(&rows);
            let y = &labels[..rows.len()];
            let (_, gw, gb) = loss_and_grad(&x, y, &w, b, l2);
            let h = 1e-5;
            for j in 0..3 {
                let mut up = w.clone();
                up[j] += h;
                let mut down = w.clone();
                down[j] -= h;
                let fd = (loss_and_grad(&x, y, &up, b, l2).0 - loss_and_grad(&x, y, &down, b, l2).0) / (2.0 * h);
                prop_assert!((fd - gw[j]).abs() < 1e-5, "w{}: {} vs {}", j, fd, gw[j]);
            }
            let fd = (loss_and_grad(&x, y, &w, b + h, l2).0 - loss_and_grad(&x, y, &w, b - h, l2).0) / (2.0 * h);
            prop_assert!((fd - gb).abs() < 1e-5);
        }
    }
}
