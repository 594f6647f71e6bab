//! Multinomial logistic regression trained by full-batch gradient descent.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::learners::{check_training_input, Classifier};
use crate::math::{ln, softmax_into, sqrt};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxConfig {
    pub epochs: usize,
    pub step_size: f64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            step_size: 0.5,
        }
    }
}

/// Weights are stored per class as `[bias, w_0 .. w_{d-1}]` over standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    pub(crate) mean: Vec<f64>,
    pub(crate) scale: Vec<f64>,
    pub(crate) n_classes: usize,
    pub(crate) weights: Vec<f64>,
}

impl SoftmaxRegression {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn standardize(&self, x: &Matrix) -> Matrix {
        standardize_with(x, &self.mean, &self.scale)
    }
}

fn standardize_with(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        for ((v, m), s) in out.row_mut(i).iter_mut().zip(mean).zip(scale) {
            *v = (*v - m) / s;
        }
    }
    out
}

/// Column means and standard deviations; zero deviations are replaced by 1.
pub(crate) fn column_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mut mean = alloc::vec![0.0; x.cols()];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = alloc::vec![0.0; x.cols()];
    for r in x.iter_rows() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = sqrt(s / n);
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn logits_into(weights: &[f64], row: &[f64], n_classes: usize, out: &mut [f64]) {
    let stride = row.len() + 1;
    for (k, o) in out.iter_mut().enumerate().take(n_classes) {
        let w = &weights[k * stride..(k + 1) * stride];
        *o = w[0] + w[1..].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Mean cross-entropy and its gradient with respect to `weights`
/// (layout `[class][bias, w_0 .. w_{d-1}]`) on already standardized inputs.
pub fn loss_and_gradient(
    weights: &[f64],
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
) -> (f64, Vec<f64>) {
    let stride = x.cols() + 1;
    let n = x.rows() as f64;
    let mut grad = alloc::vec![0.0; weights.len()];
    let mut logits = alloc::vec![0.0; n_classes];
    let mut p = alloc::vec![0.0; n_classes];
    let mut loss = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let row = x.row(i);
        logits_into(weights, row, n_classes, &mut logits);
        softmax_into(&logits, &mut p);
        loss -= ln(p[label].max(f64::MIN_POSITIVE));
        for k in 0..n_classes {
            let err = p[k] - if k == label { 1.0 } else { 0.0 };
            let g = &mut grad[k * stride..(k + 1) * stride];
            g[0] += err;
            for (gj, xj) in g[1..].iter_mut().zip(row) {
                *gj += err * xj;
            }
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

pub fn fit_softmax_regression(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    config: &SoftmaxConfig,
) -> Result<SoftmaxRegression> {
    check_training_input(x, y, n_classes)?;
    if !(config.step_size > 0.0 && config.step_size.is_finite()) {
        return Err(Error::InvalidConfig("step size must be positive".into()));
    }
    let (mean, scale) = column_moments(x);
    let xs = standardize_with(x, &mean, &scale);
    let mut weights = alloc::vec![0.0; n_classes * (x.cols() + 1)];
    for epoch in 0..config.epochs {
        let (loss, grad) = loss_and_gradient(&weights, &xs, y, n_classes);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.step_size * g;
        }
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
        });
    }
    Ok(SoftmaxRegression {
        mean,
        scale,
        n_classes,
        weights,
    })
}

impl Classifier for SoftmaxRegression {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features_in(&self) -> usize {
        self.mean.len()
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("linear model input columns", self.mean.len())?;
        let xs = self.standardize(x);
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        let mut logits = alloc::vec![0.0; self.n_classes];
        for i in 0..xs.rows() {
            logits_into(&self.weights, xs.row(i), self.n_classes, &mut logits);
            softmax_into(&logits, out.row_mut(i));
        }
        Ok(out)
    }
}
