use nalgebra::DMatrix;

use super::lasso::dot;
use super::{check_xy, soft_threshold, Centered, Family, FitResult};
use crate::error::{Error, Result};

const CERT_TOL: f64 = 1e-6;
const MIN_WEIGHT: f64 = 1e-5;
const INNER_SWEEPS: usize = 1000;
/// Standardised coefficient size past which the fit is declared divergent.
const DIVERGENCE: f64 = 1e3;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Mean negative log-likelihood `1/n sum log(1 + e^eta) - y eta`.
pub fn logistic_neg_loglik(
    x: &DMatrix<f64>,
    y: &[f64],
    coefficients: &[f64],
    intercept: f64,
) -> f64 {
    let n = y.len() as f64;
    (0..y.len())
        .map(|i| {
            let eta = intercept
                + x.row(i)
                    .iter()
                    .zip(coefficients)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            softplus(eta) - y[i] * eta
        })
        .sum::<f64>()
        / n
}

/// Gradient of [`logistic_neg_loglik`]; the intercept component comes first.
pub fn logistic_gradient(
    x: &DMatrix<f64>,
    y: &[f64],
    coefficients: &[f64],
    intercept: f64,
) -> Vec<f64> {
    let n = y.len() as f64;
    let mut g = vec![0.0; coefficients.len() + 1];
    for i in 0..y.len() {
        let row = x.row(i);
        let eta = intercept
            + row
                .iter()
                .zip(coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let e = sigmoid(eta) - y[i];
        g[0] += e;
        for (gj, xj) in g[1..].iter_mut().zip(row.iter()) {
            *gj += e * xj;
        }
    }
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// L1-penalised logistic regression by iteratively reweighted coordinate descent.
pub fn fit_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FitResult> {
    let p = LogisticProblem::new(x, y, None)?;
    let mut s = p.cold_state();
    let (it, ok) = p.solve(&mut s, lambda, tol, max_iter)?;
    Ok(p.result(s, lambda, it, ok))
}

pub(crate) struct LogisticProblem<'a> {
    c: Centered,
    y: &'a [f64],
    offset: Vec<f64>,
}

#[derive(Clone)]
pub(crate) struct LogisticState {
    b: f64,
    pub beta: Vec<f64>,
}

impl<'a> LogisticProblem<'a> {
    pub fn new(x: &DMatrix<f64>, y: &'a [f64], offset: Option<&[f64]>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("logistic regression needs at least one row"));
        }
        check_xy(x, y)?;
        if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::invalid("logistic response must be 0 or 1"));
        }
        let offset = match offset {
            Some(o) if o.len() != y.len() => return Err(Error::mismatch(y.len(), o.len())),
            Some(o) => o.to_vec(),
            None => vec![0.0; y.len()],
        };
        Ok(Self {
            c: Centered::new(x),
            y,
            offset,
        })
    }

    /// Gradient at beta = 0 with the intercept at its optimum; exact without an offset.
    pub fn lambda_max(&self) -> f64 {
        let n = self.c.n as f64;
        let ybar = self.y.iter().sum::<f64>() / n;
        self.c
            .cols
            .iter()
            .map(|col| {
                (col.iter()
                    .zip(self.y)
                    .map(|(a, b)| a * (b - ybar))
                    .sum::<f64>()
                    / n)
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn cold_state(&self) -> LogisticState {
        LogisticState {
            b: 0.0,
            beta: vec![0.0; self.c.cols.len()],
        }
    }

    fn eta(&self, s: &LogisticState) -> Vec<f64> {
        let mut eta: Vec<f64> = self.offset.iter().map(|o| o + s.b).collect();
        for (col, &b) in self.c.cols.iter().zip(&s.beta) {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(col) {
                    *e += x * b;
                }
            }
        }
        eta
    }

    fn objective(&self, s: &LogisticState, lambda: f64) -> f64 {
        let eta = self.eta(s);
        let nll = eta
            .iter()
            .zip(self.y)
            .map(|(e, y)| softplus(*e) - y * e)
            .sum::<f64>()
            / self.c.n as f64;
        nll + lambda * s.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn certificate(&self, s: &LogisticState, lambda: f64) -> f64 {
        let n = self.c.n as f64;
        let resid: Vec<f64> = self
            .eta(s)
            .iter()
            .zip(self.y)
            .map(|(e, y)| sigmoid(*e) - y)
            .collect();
        let g0 = resid.iter().sum::<f64>() / n;
        let mut worst = g0.abs();
        for (j, col) in self.c.cols.iter().enumerate() {
            let g = dot(col, &resid) / n + self.c.means[j] * g0;
            let b = s.beta[j];
            let v = if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    fn diverged(&self, s: &LogisticState) -> bool {
        let big = s
            .beta
            .iter()
            .zip(&self.c.scale2)
            .map(|(b, a)| b.abs() * a.sqrt())
            .fold(s.b.abs(), f64::max);
        big > DIVERGENCE || !big.is_finite()
    }

    /// Returns (outer iterations, converged).
    pub fn solve(
        &self,
        s: &mut LogisticState,
        lambda: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<(usize, bool)> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let n = self.c.n as f64;
        let mut f_old = self.objective(s, lambda);
        for it in 1..=max_iter {
            let eta = self.eta(s);
            let mut w = Vec::with_capacity(eta.len());
            let mut rr = Vec::with_capacity(eta.len());
            for (e, y) in eta.iter().zip(self.y) {
                let p = sigmoid(*e);
                let wi = (p * (1.0 - p)).max(MIN_WEIGHT);
                w.push(wi);
                rr.push((y - p) / wi);
            }
            let sw: f64 = w.iter().sum();
            let a: Vec<f64> = self
                .c
                .cols
                .iter()
                .map(|col| col.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>() / n)
                .collect();

            let mut prop = s.clone();
            for _ in 0..INNER_SWEEPS {
                let db = rr.iter().zip(&w).map(|(r, wi)| r * wi).sum::<f64>() / sw;
                prop.b += db;
                rr.iter_mut().for_each(|r| *r -= db);
                let mut max_step = db.abs();
                for (j, col) in self.c.cols.iter().enumerate() {
                    if self.c.scale2[j] == 0.0 {
                        continue;
                    }
                    let old = prop.beta[j];
                    let g = col
                        .iter()
                        .zip(&rr)
                        .zip(&w)
                        .map(|((x, r), wi)| wi * x * r)
                        .sum::<f64>()
                        / n;
                    let new = soft_threshold(g + a[j] * old, lambda) / a[j];
                    let d = new - old;
                    if d != 0.0 {
                        for (r, x) in rr.iter_mut().zip(col) {
                            *r -= x * d;
                        }
                        prop.beta[j] = new;
                        max_step = max_step.max(d.abs() * self.c.scale2[j].sqrt());
                    }
                }
                if max_step < tol * 0.1 {
                    break;
                }
            }

            // Step halving keeps the penalised objective from increasing.
            let mut f_new = self.objective(&prop, lambda);
            let mut t = 1.0;
            while !(f_new <= f_old + 1e-14 * f_old.abs()) && t > 1e-10 {
                t *= 0.5;
                prop.b = s.b + t * (prop.b - s.b);
                for (pb, sb) in prop.beta.iter_mut().zip(&s.beta) {
                    *pb = sb + t * (*pb - sb);
                }
                f_new = self.objective(&prop, lambda);
            }
            if !(f_new <= f_old + 1e-14 * f_old.abs()) {
                return Ok((it, self.certificate(s, lambda) <= CERT_TOL));
            }
            let step = prop
                .beta
                .iter()
                .zip(&s.beta)
                .zip(&self.c.scale2)
                .map(|((a, b), s2)| (a - b).abs() * s2.sqrt())
                .fold((prop.b - s.b).abs(), f64::max);
            *s = prop;
            f_old = f_new;
            if self.diverged(s) {
                return Ok((it, false));
            }
            if step < tol && self.certificate(s, lambda) <= CERT_TOL {
                return Ok((it, true));
            }
        }
        Ok((max_iter, false))
    }

    pub fn result(
        &self,
        s: LogisticState,
        lambda: f64,
        iterations: usize,
        converged: bool,
    ) -> FitResult {
        FitResult {
            family: Family::Logistic,
            intercept: self.c.intercept(s.b, &s.beta),
            coefficients: s.beta,
            lambda,
            iterations,
            converged,
        }
    }
}
