use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lasso::{LassoProblem, Stopping};
use super::logistic::{sigmoid, LogisticProblem};
use super::{Family, FitResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub n_lambda: usize,
    pub min_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Convergence threshold for the fold fits, relative to the response variance.
    pub path_thresh: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            n_lambda: 50,
            min_ratio: 1e-4,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            path_thresh: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// `fold_losses[l][k]`: held-out loss of fold `k` at `lambdas[l]`.
    pub fold_losses: Vec<Vec<f64>>,
    pub mean_loss: Vec<f64>,
    pub best: usize,
}

impl CvResult {
    pub fn lambda_min(&self) -> f64 {
        self.lambdas[self.best]
    }

    pub fn best_loss(&self) -> f64 {
        self.mean_loss[self.best]
    }

    /// Sample standard deviation of the fold losses at the chosen penalty.
    pub fn best_sd(&self) -> f64 {
        sample_sd(&self.fold_losses[self.best])
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Log-spaced grid from `lambda_max` down to `lambda_max * min_ratio`.
/// A zero `lambda_max` collapses the grid to `[0]`.
pub fn lambda_grid(lambda_max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 || n == 0 {
        return vec![0.0];
    }
    if n == 1 {
        return vec![lambda_max];
    }
    (0..n)
        .map(|k| lambda_max * min_ratio.powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Penalised fit with an optional fixed offset added to the linear predictor.
pub(crate) fn fit_penalized(
    family: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: Option<&[f64]>,
    lambda: f64,
    cfg: &CvConfig,
) -> Result<FitResult> {
    Ok(path(family, x, y, offset, &[lambda], cfg, false)?
        .pop()
        .expect("one fit"))
}

fn adjusted(y: &[f64], offset: Option<&[f64]>) -> Result<Vec<f64>> {
    match offset {
        None => Ok(y.to_vec()),
        Some(o) if o.len() != y.len() => Err(Error::mismatch(y.len(), o.len())),
        Some(o) => Ok(y.iter().zip(o).map(|(a, b)| a - b).collect()),
    }
}

fn family_lambda_max(
    family: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: Option<&[f64]>,
) -> Result<f64> {
    match family {
        Family::Linear => Ok(LassoProblem::new(x, &adjusted(y, offset)?)?.lambda_max()),
        Family::Logistic => {
            let p = LogisticProblem::new(x, y, offset)?;
            if offset.is_none() {
                return Ok(p.lambda_max());
            }
            // Intercept-only fit under the offset, then the largest gradient.
            let f = fit_penalized(family, x, y, offset, 1e300, &CvConfig::default())?;
            let eta: Vec<f64> = f
                .linear_predictor(x)
                .iter()
                .zip(offset.unwrap())
                .map(|(a, b)| a + b)
                .collect();
            let n = y.len() as f64;
            Ok((0..x.ncols())
                .map(|j| {
                    let g = (0..y.len())
                        .map(|i| x[(i, j)] * (sigmoid(eta[i]) - y[i]))
                        .sum::<f64>()
                        / n;
                    g.abs()
                })
                .fold(0.0, f64::max))
        }
    }
}

/// Warm-started fits along a decreasing penalty sequence.
fn path(
    family: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: Option<&[f64]>,
    lambdas: &[f64],
    cfg: &CvConfig,
    relaxed: bool,
) -> Result<Vec<FitResult>> {
    let stopping = if relaxed {
        Stopping::Relaxed(cfg.path_thresh)
    } else {
        Stopping::Strict(cfg.tol)
    };
    let mut out = Vec::with_capacity(lambdas.len());
    match family {
        Family::Linear => {
            let p = LassoProblem::new(x, &adjusted(y, offset)?)?;
            let mut s = p.cold_state();
            for &lam in lambdas {
                let (it, ok) = p.solve(&mut s, lam, stopping, cfg.max_iter, None)?;
                out.push(p.result(s.clone(), lam, it, ok));
            }
        }
        Family::Logistic => {
            let p = LogisticProblem::new(x, y, offset)?;
            let mut s = p.cold_state();
            for &lam in lambdas {
                let (it, ok) = p.solve(&mut s, lam, cfg.tol, cfg.max_iter)?;
                out.push(p.result(s.clone(), lam, it, ok));
            }
        }
    }
    Ok(out)
}

/// Mean held-out loss: squared error or negative log-likelihood.
pub(crate) fn holdout_loss(
    family: Family,
    fit: &FitResult,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: Option<&[f64]>,
) -> f64 {
    let eta = fit.linear_predictor(x);
    let n = y.len() as f64;
    let off = |i: usize| offset.map_or(0.0, |o| o[i]);
    match family {
        Family::Linear => {
            (0..y.len())
                .map(|i| ((y[i] - off(i)) - eta[i]).powi(2))
                .sum::<f64>()
                / n
        }
        Family::Logistic => {
            (0..y.len())
                .map(|i| {
                    let e = eta[i] + off(i);
                    e.max(0.0) + (-e.abs()).exp().ln_1p() - y[i] * e
                })
                .sum::<f64>()
                / n
        }
    }
}

/// K-fold cross-validation over the default penalty grid. Row `i` belongs
/// to fold `i % folds`.
pub fn cv_fit(
    family: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: Option<&[f64]>,
    cfg: &CvConfig,
) -> Result<CvResult> {
    let n = y.len();
    if cfg.folds < 2 || n < cfg.folds {
        return Err(Error::invalid(format!(
            "{}-fold cross-validation needs at least {} rows, got {n}",
            cfg.folds, cfg.folds
        )));
    }
    if x.nrows() != n {
        return Err(Error::mismatch(format!("{} responses", x.nrows()), n));
    }
    let lambdas = lambda_grid(
        family_lambda_max(family, x, y, offset)?,
        cfg.n_lambda,
        cfg.min_ratio,
    );
    let mut fold_losses = vec![vec![0.0; cfg.folds]; lambdas.len()];
    for k in 0..cfg.folds {
        let train: Vec<usize> = (0..n).filter(|i| i % cfg.folds != k).collect();
        let test: Vec<usize> = (0..n).filter(|i| i % cfg.folds == k).collect();
        let pick = |idx: &[usize]| {
            (
                x.select_rows(idx.iter()),
                idx.iter().map(|&i| y[i]).collect::<Vec<_>>(),
                offset.map(|o| idx.iter().map(|&i| o[i]).collect::<Vec<_>>()),
            )
        };
        let (xtr, ytr, otr) = pick(&train);
        let (xte, yte, ote) = pick(&test);
        let fits = path(family, &xtr, &ytr, otr.as_deref(), &lambdas, cfg, true)?;
        for (l, fit) in fits.iter().enumerate() {
            fold_losses[l][k] = holdout_loss(family, fit, &xte, &yte, ote.as_deref());
        }
    }
    let mean_loss: Vec<f64> = fold_losses
        .iter()
        .map(|f| f.iter().sum::<f64>() / f.len() as f64)
        .collect();
    let mut best = 0;
    for (l, m) in mean_loss.iter().enumerate() {
        if *m < mean_loss[best] || (mean_loss[best].is_nan() && !m.is_nan()) {
            best = l;
        }
    }
    Ok(CvResult {
        lambdas,
        fold_losses,
        mean_loss,
        best,
    })
}

/// Cross-validates the penalty, then refits on all rows at the minimiser.
pub fn fit_cv(
    family: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: Option<&[f64]>,
    cfg: &CvConfig,
) -> Result<(FitResult, CvResult)> {
    let cv = cv_fit(family, x, y, offset, cfg)?;
    let fit = fit_penalized(family, x, y, offset, cv.lambda_min(), cfg)?;
    Ok((fit, cv))
}
