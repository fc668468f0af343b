//! Regression estimators shared by the filters and the harness.

mod cv;
mod lasso;
mod logistic;
mod ols;

pub use cv::{cv_fit, fit_cv, lambda_grid, CvConfig, CvResult};
pub(crate) use cv::{fit_penalized, holdout_loss};
pub use lasso::{
    fit_lasso, fit_lasso_traced, kkt_violation, lambda_max, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
pub use logistic::{fit_logistic, logistic_gradient, logistic_neg_loglik, sigmoid};
pub use ols::fit_ols;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    /// `intercept + x * coefficients` for every row.
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + x.row(i)
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Predictions on the response scale (probabilities for logistic fits).
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let eta = self.linear_predictor(x);
        match self.family {
            Family::Linear => eta,
            Family::Logistic => eta.into_iter().map(sigmoid).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    /// Logistic fits only; labels are predicted as 1 when p > 0.5.
    pub misclassification_rate: Option<f64>,
    pub n_eval: usize,
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64
}

pub fn evaluate(fit: &FitResult, x_test: &DMatrix<f64>, y_test: &[f64]) -> Result<Metrics> {
    if y_test.is_empty() || x_test.nrows() == 0 {
        return Err(Error::invalid("empty test set"));
    }
    check_xy(x_test, y_test)?;
    if x_test.ncols() != fit.coefficients.len() {
        return Err(Error::mismatch(fit.coefficients.len(), x_test.ncols()));
    }
    let pred = fit.predict(x_test);
    let misclassification_rate = match fit.family {
        Family::Linear => None,
        Family::Logistic => {
            let wrong = pred
                .iter()
                .zip(y_test)
                .filter(|(p, y)| (**p > 0.5) != (**y > 0.5))
                .count();
            Some(wrong as f64 / y_test.len() as f64)
        }
    };
    Ok(Metrics {
        mse: mse(&pred, y_test),
        misclassification_rate,
        n_eval: y_test.len(),
    })
}

pub(crate) fn check_xy(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::mismatch(format!("{} responses", x.nrows()), y.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design or response".into()));
    }
    Ok(())
}

/// Design matrix split into centred columns.
pub(crate) struct Centered {
    pub n: usize,
    pub cols: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// `|x_j|^2 / n` of the centred column.
    pub scale2: Vec<f64>,
}

impl Centered {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let mut cols = Vec::with_capacity(x.ncols());
        let mut means = Vec::with_capacity(x.ncols());
        let mut scale2 = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let mean = col.sum() / n as f64;
            let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let s2 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
            // Columns constant up to rounding are treated as exactly constant.
            let (c, s2) = if s2 <= 1e-24 * (1.0 + mean * mean) {
                (vec![0.0; n], 0.0)
            } else {
                (c, s2)
            };
            cols.push(c);
            means.push(mean);
            scale2.push(s2);
        }
        Self {
            n,
            cols,
            means,
            scale2,
        }
    }

    pub fn intercept(&self, y_mean: f64, beta: &[f64]) -> f64 {
        y_mean - self.means.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>()
    }
}

pub(crate) fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}
