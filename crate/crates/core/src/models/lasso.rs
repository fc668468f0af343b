use nalgebra::DMatrix;

use super::{check_xy, soft_threshold, Centered, Family, FitResult};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 10_000;
const KKT_TOL: f64 = 1e-6;

/// Smallest penalty at which every coefficient is zero: `max_j |x_j'(y - ybar)| / n`.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let c = Centered::new(x);
    c.cols
        .iter()
        .map(|col| {
            (col.iter()
                .zip(y)
                .map(|(a, b)| a * (b - y_mean))
                .sum::<f64>()
                / n)
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Lasso with an unpenalised intercept by cyclic coordinate descent on
/// `1/(2n) |y - X b - c|^2 + lambda |b|_1`.
pub fn fit_lasso(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FitResult> {
    fit_lasso_impl(x, y, lambda, tol, max_iter, None)
}

/// As [`fit_lasso`], also returning the objective after every sweep.
pub fn fit_lasso_traced(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(FitResult, Vec<f64>)> {
    let mut trace = Vec::new();
    let fit = fit_lasso_impl(x, y, lambda, tol, max_iter, Some(&mut trace))?;
    Ok((fit, trace))
}

/// Largest violation of the Lasso optimality conditions, in original units.
pub fn kkt_violation(x: &DMatrix<f64>, y: &[f64], fit: &FitResult) -> f64 {
    let n = y.len() as f64;
    let pred = fit.linear_predictor(x);
    let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let mut worst = (r.iter().sum::<f64>() / n).abs();
    for (j, &b) in fit.coefficients.iter().enumerate() {
        let g = x.column(j).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n;
        let v = if b == 0.0 {
            (g.abs() - fit.lambda).max(0.0)
        } else {
            (g - fit.lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

fn fit_lasso_impl(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
    trace: Option<&mut Vec<f64>>,
) -> Result<FitResult> {
    let problem = LassoProblem::new(x, y)?;
    let mut state = problem.cold_state();
    let (iterations, converged) =
        problem.solve(&mut state, lambda, Stopping::Strict(tol), max_iter, trace)?;
    Ok(problem.result(state, lambda, iterations, converged))
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Stopping {
    /// Largest standardised update below `tol`, then the KKT certificate.
    Strict(f64),
    /// `max_j a_j d_j^2 < thresh * var(y)`, no certificate. Used inside
    /// cross-validation where only held-out losses matter.
    Relaxed(f64),
}

pub(crate) struct LassoProblem {
    c: Centered,
    yc: Vec<f64>,
    y_mean: f64,
}

#[derive(Clone)]
pub(crate) struct LassoState {
    pub beta: Vec<f64>,
    r: Vec<f64>,
}

impl LassoProblem {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("Lasso needs at least one row"));
        }
        check_xy(x, y)?;
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        Ok(Self {
            c: Centered::new(x),
            yc: y.iter().map(|v| v - y_mean).collect(),
            y_mean,
        })
    }

    pub fn lambda_max(&self) -> f64 {
        let n = self.c.n as f64;
        self.c
            .cols
            .iter()
            .map(|col| (dot(col, &self.yc) / n).abs())
            .fold(0.0, f64::max)
    }

    pub fn cold_state(&self) -> LassoState {
        LassoState {
            beta: vec![0.0; self.c.cols.len()],
            r: self.yc.clone(),
        }
    }

    fn objective(&self, s: &LassoState, lambda: f64) -> f64 {
        0.5 * dot(&s.r, &s.r) / self.c.n as f64
            + lambda * s.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn refresh_residual(&self, s: &mut LassoState) {
        s.r.copy_from_slice(&self.yc);
        for (col, &b) in self.c.cols.iter().zip(&s.beta) {
            if b != 0.0 {
                for (r, x) in s.r.iter_mut().zip(col) {
                    *r -= x * b;
                }
            }
        }
    }

    fn kkt(&self, s: &LassoState, lambda: f64) -> f64 {
        let n = self.c.n as f64;
        let mut worst: f64 = 0.0;
        for (col, &b) in self.c.cols.iter().zip(&s.beta) {
            let g = dot(col, &s.r) / n;
            let v = if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Runs sweeps from the given state; returns (sweeps, converged).
    pub fn solve(
        &self,
        s: &mut LassoState,
        lambda: f64,
        stopping: Stopping,
        max_iter: usize,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<(usize, bool)> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.objective(s, lambda));
        }
        let tol = match stopping {
            Stopping::Strict(tol) => tol,
            Stopping::Relaxed(thresh) => {
                (thresh * dot(&self.yc, &self.yc) / self.c.n as f64).sqrt()
            }
        };
        // Full sweeps find the support; inner sweeps over the nonzero
        // coordinates do most of the work.
        let mut sweeps = 0;
        while sweeps < max_iter {
            sweeps += 1;
            let max_step = self.sweep(s, lambda, None);
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(s, lambda));
            }
            if max_step < tol {
                if let Stopping::Relaxed(_) = stopping {
                    return Ok((sweeps, true));
                }
                self.refresh_residual(s);
                let kkt = self.kkt(s, lambda);
                if kkt <= KKT_TOL || max_step == 0.0 {
                    return Ok((sweeps, kkt <= KKT_TOL));
                }
                continue;
            }
            let active: Vec<usize> = (0..s.beta.len()).filter(|&j| s.beta[j] != 0.0).collect();
            while sweeps < max_iter {
                sweeps += 1;
                let step = self.sweep(s, lambda, Some(&active));
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(s, lambda));
                }
                if step < tol {
                    break;
                }
            }
        }
        self.refresh_residual(s);
        Ok((max_iter, false))
    }

    /// One cyclic pass; returns the largest standardised coefficient change.
    fn sweep(&self, s: &mut LassoState, lambda: f64, subset: Option<&[usize]>) -> f64 {
        let n = self.c.n as f64;
        let mut max_step: f64 = 0.0;
        let mut update = |j: usize, s: &mut LassoState| {
            let a = self.c.scale2[j];
            if a == 0.0 {
                s.beta[j] = 0.0;
                return;
            }
            let col = &self.c.cols[j];
            let old = s.beta[j];
            let z = dot(col, &s.r) / n + a * old;
            let new = soft_threshold(z, lambda) / a;
            let delta = new - old;
            if delta != 0.0 {
                for (r, x) in s.r.iter_mut().zip(col) {
                    *r -= x * delta;
                }
                s.beta[j] = new;
                max_step = max_step.max(delta.abs() * a.sqrt());
            }
        };
        match subset {
            Some(idx) => idx.iter().for_each(|&j| update(j, s)),
            None => (0..s.beta.len()).for_each(|j| update(j, s)),
        }
        max_step
    }

    pub fn result(
        &self,
        s: LassoState,
        lambda: f64,
        iterations: usize,
        converged: bool,
    ) -> FitResult {
        FitResult {
            family: Family::Linear,
            intercept: self.c.intercept(self.y_mean, &s.beta),
            coefficients: s.beta,
            lambda,
            iterations,
            converged,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
