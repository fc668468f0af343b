use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::DataMatrix;
use crate::error::{Error, Result};
use crate::models::{
    cv_fit, evaluate, fit_cv, fit_penalized, holdout_loss, CvConfig, Family, FitResult,
};
use crate::rng;

pub const DETECTION_FOLDS: usize = 5;
const POOL_TAG: u64 = 0x706f_6f6c;

fn default_iterations() -> usize {
    100
}
fn default_c0() -> f64 {
    2.0
}
fn default_validation_factor() -> f64 {
    1.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub ratio_set: Vec<f64>,
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_c0")]
    pub detection_c0: f64,
    /// Accepted for parity with the high-dimensional setting; plays the same role as `detection_c0`.
    #[serde(default = "default_c0")]
    pub detection_delta0: f64,
    #[serde(default = "default_validation_factor")]
    pub validation_factor: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub family: Family,
}

impl TransferConfig {
    pub fn new(ratio_set: Vec<f64>, batch_size: usize, seed: u64) -> Self {
        Self {
            ratio_set,
            batch_size,
            iterations: default_iterations(),
            detection_c0: default_c0(),
            detection_delta0: default_c0(),
            validation_factor: default_validation_factor(),
            seed,
            family: Family::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratio_set.is_empty() {
            return Err(Error::invalid("ratio_set is empty"));
        }
        if let Some(r) = self.ratio_set.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::invalid(format!("ratio {r} outside (0, 1]")));
        }
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::invalid(
                "batch_size and iterations must be at least 1",
            ));
        }
        if !(self.detection_c0 > 0.0) || !(self.detection_delta0 > 0.0) {
            return Err(Error::invalid("detection constants must be positive"));
        }
        if !(self.validation_factor > 0.0) {
            return Err(Error::invalid("validation_factor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub batches: [usize; 2],
    pub transferable: [usize; 2],
    pub validation_mse: [f64; 2],
    pub valid: bool,
    pub combined_mse: Option<f64>,
    pub adaptability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSummary {
    pub rho: f64,
    /// `None` when no iteration passed validation.
    pub mean_error: Option<f64>,
    pub mean_adaptability: Option<f64>,
    pub n_valid_iterations: usize,
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectReport {
    pub rho_star: f64,
    pub per_rho: Vec<RhoSummary>,
    pub baseline_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub baseline_loss: f64,
    pub baseline_sd: f64,
    pub source_losses: Vec<f64>,
    pub mask: Vec<bool>,
}

fn cv_config() -> CvConfig {
    CvConfig {
        folds: DETECTION_FOLDS,
        ..CvConfig::default()
    }
}

fn xy(d: &DataMatrix) -> (DMatrix<f64>, Vec<f64>) {
    (d.predictors(), d.response())
}

fn check_layout(reference: &DataMatrix, other: &DataMatrix) -> Result<()> {
    if other.ncols() != reference.ncols() || other.response_col() != reference.response_col() {
        return Err(Error::mismatch(
            format!(
                "{} columns, response {}",
                reference.ncols(),
                reference.response_col()
            ),
            format!(
                "{} columns, response {}",
                other.ncols(),
                other.response_col()
            ),
        ));
    }
    Ok(())
}

/// Flags sources whose pooled fit does not hurt cross-validated loss on the target.
pub fn detect_transferable(
    target: &DataMatrix,
    sources: &[DataMatrix],
    family: Family,
    c0: f64,
) -> Result<Vec<bool>> {
    Ok(detect_with_losses(target, sources, family, c0)?.mask)
}

/// Detection with the losses behind each decision.
///
/// The baseline is target-only cross-validation (mean `L0`, fold sd `s0`).
/// For each source the penalty is cross-validated on target plus source,
/// then the same target folds are held out from a pooled fit. A source
/// passes when its held-out loss `Lk <= L0 + c0 * s0`.
pub fn detect_with_losses(
    target: &DataMatrix,
    sources: &[DataMatrix],
    family: Family,
    c0: f64,
) -> Result<Detection> {
    let n = target.nrows();
    if n < 2 * DETECTION_FOLDS {
        return Err(Error::invalid(format!(
            "detection needs at least {} target rows, got {n}",
            2 * DETECTION_FOLDS
        )));
    }
    for s in sources {
        check_layout(target, s)?;
    }
    let cfg = cv_config();
    let (x, y) = xy(target);
    let base = cv_fit(family, &x, &y, None, &cfg)?;
    let (baseline_loss, baseline_sd) = (base.best_loss(), base.best_sd());
    let threshold = baseline_loss + c0 * baseline_sd;

    let mut source_losses = Vec::with_capacity(sources.len());
    for source in sources {
        let pooled = target.vstack(source)?;
        let (px, py) = xy(&pooled);
        let lambda = cv_fit(family, &px, &py, None, &cfg)?.lambda_min();
        let (sx, sy) = xy(source);
        let mut total = 0.0;
        for k in 0..DETECTION_FOLDS {
            let train: Vec<usize> = (0..n).filter(|i| i % DETECTION_FOLDS != k).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % DETECTION_FOLDS == k).collect();
            let tx = stack(&x.select_rows(train.iter()), &sx);
            let ty: Vec<f64> = train
                .iter()
                .map(|&i| y[i])
                .chain(sy.iter().copied())
                .collect();
            let fit = fit_penalized(family, &tx, &ty, None, lambda, &cfg)?;
            let hy: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            total += holdout_loss(family, &fit, &x.select_rows(test.iter()), &hy, None);
        }
        source_losses.push(total / DETECTION_FOLDS as f64);
    }
    let mask = source_losses.iter().map(|l| *l <= threshold).collect();
    Ok(Detection {
        baseline_loss,
        baseline_sd,
        source_losses,
        mask,
    })
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n1 = a.nrows();
    DMatrix::from_fn(n1 + b.nrows(), a.ncols(), |i, j| {
        if i < n1 {
            a[(i, j)]
        } else {
            b[(i - n1, j)]
        }
    })
}

/// Pooled fit on target and sources, then a correction fitted on the target
/// with the pooled predictor as offset. Without sources this is exactly the
/// cross-validated target-only Lasso.
pub fn two_step_transfer_fit(
    target: &DataMatrix,
    sources: &[DataMatrix],
    family: Family,
) -> Result<FitResult> {
    let cfg = cv_config();
    let (x, y) = xy(target);
    if sources.is_empty() {
        return Ok(fit_cv(family, &x, &y, None, &cfg)?.0);
    }
    let mut parts = vec![target];
    for s in sources {
        check_layout(target, s)?;
        parts.push(s);
    }
    let pooled = DataMatrix::concat(&parts)?;
    let (px, py) = xy(&pooled);
    let (w, _) = fit_cv(family, &px, &py, None, &cfg)?;
    let offset = w.linear_predictor(&x);
    let (delta, _) = fit_cv(family, &x, &y, Some(&offset), &cfg)?;
    Ok(FitResult {
        family,
        coefficients: w
            .coefficients
            .iter()
            .zip(&delta.coefficients)
            .map(|(a, b)| a + b)
            .collect(),
        intercept: w.intercept + delta.intercept,
        lambda: delta.lambda,
        iterations: w.iterations + delta.iterations,
        converged: w.converged && delta.converged,
    })
}

/// Detection followed by the two-step fit on the sources that pass.
pub fn adapt(
    target: &DataMatrix,
    batches: &[DataMatrix],
    family: Family,
    c0: f64,
) -> Result<(FitResult, Vec<bool>)> {
    let mask = detect_transferable(target, batches, family, c0)?;
    let kept: Vec<DataMatrix> = batches
        .iter()
        .zip(&mask)
        .filter(|(_, keep)| **keep)
        .map(|(b, _)| b.clone())
        .collect();
    Ok((two_step_transfer_fit(target, &kept, family)?, mask))
}

/// `|b1 - b2| / (1 + min(|b1|, |b2|))`.
pub fn adaptability(f1: &FitResult, f2: &FitResult) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = f1
        .coefficients
        .iter()
        .zip(&f2.coefficients)
        .map(|(a, b)| a - b)
        .collect();
    norm(&diff) / (1.0 + norm(&f1.coefficients).min(norm(&f2.coefficients)))
}

/// Consecutive batches of `b` rows; the last one may be shorter.
pub fn batch_split(data: &DataMatrix, b: usize) -> Vec<DataMatrix> {
    let idx: Vec<usize> = (0..data.nrows()).collect();
    idx.chunks(b.max(1)).map(|c| data.select_rows(c)).collect()
}

fn sample_ratio<R: Rng>(data: &DataMatrix, rho: f64, rng: &mut R) -> DataMatrix {
    let n = data.nrows();
    let m = ((rho * n as f64).round() as usize).clamp(1, n);
    data.select_rows(&index::sample(rng, n, m).into_vec())
}

/// Random split into (fit rows, held-out fifth), both in ascending order.
fn holdout_fifth<R: Rng>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let v = ((n as f64 / 5.0).round() as usize).clamp(1, n - 1);
    let mut val = idx[..v].to_vec();
    let mut fit = idx[v..].to_vec();
    val.sort_unstable();
    fit.sort_unstable();
    (fit, val)
}

/// Dual-source selection of the sampling ratio.
///
/// `s1` adapts to `t2` and `s2` to `t1`. Every iteration fits each adapted
/// model on four fifths of its target and validates it on the rest.
pub fn dual_source_select(
    s1: &DataMatrix,
    s2: &DataMatrix,
    t1: &DataMatrix,
    t2: &DataMatrix,
    d_test: &DataMatrix,
    config: &TransferConfig,
) -> Result<SelectReport> {
    config.validate()?;
    for m in [s2, t1, t2, d_test] {
        check_layout(s1, m)?;
    }
    if s1.nrows() == 0 || s2.nrows() == 0 || d_test.nrows() == 0 {
        return Err(Error::invalid("sources and test set must be non-empty"));
    }
    let family = config.family;
    let cfg = cv_config();
    let targets = t1.vstack(t2)?;
    let (tx, ty) = xy(&targets);
    let (base, _) = fit_cv(family, &tx, &ty, None, &cfg)?;
    let (test_x, test_y) = xy(d_test);
    let baseline_error = evaluate(&base, &test_x, &test_y)?.mse;
    let limit = config.validation_factor * baseline_error;

    let k_iter = config.iterations;
    let jobs: Vec<(usize, usize)> = (0..config.ratio_set.len())
        .flat_map(|r| (0..k_iter).map(move |k| (r, k)))
        .collect();
    let records: Vec<IterationRecord> = jobs
        .par_iter()
        .map(|&(r, k)| {
            let mut rng = rng::stream(config.seed, &[r as u64, k as u64]);
            let rho = config.ratio_set[r];
            let b1 = batch_split(&sample_ratio(s1, rho, &mut rng), config.batch_size);
            let b2 = batch_split(&sample_ratio(s2, rho, &mut rng), config.batch_size);
            let (fit2, val2) = holdout_fifth(t2.nrows(), &mut rng);
            let (fit1, val1) = holdout_fifth(t1.nrows(), &mut rng);
            let (f12, m12) = adapt(&t2.select_rows(&fit2), &b1, family, config.detection_c0)?;
            let (f21, m21) = adapt(&t1.select_rows(&fit1), &b2, family, config.detection_c0)?;
            let score = |f: &FitResult, t: &DataMatrix, rows: &[usize]| -> Result<f64> {
                let (vx, vy) = xy(&t.select_rows(rows));
                Ok(evaluate(f, &vx, &vy)?.mse)
            };
            let v12 = score(&f12, t2, &val2)?;
            let v21 = score(&f21, t1, &val1)?;
            let valid = v12 <= limit && v21 <= limit;
            let (combined_mse, adapt_d) = if valid {
                let (p1, p2) = (f12.predict(&test_x), f21.predict(&test_x));
                let err = p1
                    .iter()
                    .zip(&p2)
                    .zip(&test_y)
                    .map(|((a, b), y)| (0.5 * (a + b) - y).powi(2))
                    .sum::<f64>()
                    / test_y.len() as f64;
                (Some(err), Some(adaptability(&f12, &f21)))
            } else {
                (None, None)
            };
            let count = |m: &[bool]| m.iter().filter(|v| **v).count();
            Ok(IterationRecord {
                iteration: k,
                batches: [b1.len(), b2.len()],
                transferable: [count(&m12), count(&m21)],
                validation_mse: [v12, v21],
                valid,
                combined_mse,
                adaptability: adapt_d,
            })
        })
        .collect::<Result<_>>()?;

    let mut per_rho = Vec::with_capacity(config.ratio_set.len());
    for (r, chunk) in records.chunks(k_iter).enumerate() {
        let errs: Vec<f64> = chunk.iter().filter_map(|c| c.combined_mse).collect();
        let ds: Vec<f64> = chunk.iter().filter_map(|c| c.adaptability).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        per_rho.push(RhoSummary {
            rho: config.ratio_set[r],
            mean_error: mean(&errs),
            mean_adaptability: mean(&ds),
            n_valid_iterations: errs.len(),
            iterations: chunk.to_vec(),
        });
    }
    let mut best: Option<(f64, f64)> = None;
    for s in &per_rho {
        if let Some(e) = s.mean_error {
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((s.rho, e));
            }
        }
    }
    let (rho_star, _) = best.ok_or(Error::NoValidRatio)?;
    Ok(SelectReport {
        rho_star,
        per_rho,
        baseline_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolSelection {
    /// Rows of the batches that passed detection; `None` when none did.
    pub data: Option<DataMatrix>,
    pub batches: [usize; 2],
    pub transferable: [usize; 2],
}

/// Samples both pools at ratio `rho` and keeps the batches that pass
/// detection against the opposite target.
pub fn transferable_pool(
    s1: &DataMatrix,
    s2: &DataMatrix,
    t1: &DataMatrix,
    t2: &DataMatrix,
    rho: f64,
    config: &TransferConfig,
) -> Result<PoolSelection> {
    let mut rng = rng::stream(config.seed, &[POOL_TAG]);
    let b1 = batch_split(&sample_ratio(s1, rho, &mut rng), config.batch_size);
    let b2 = batch_split(&sample_ratio(s2, rho, &mut rng), config.batch_size);
    let m1 = detect_transferable(t2, &b1, config.family, config.detection_c0)?;
    let m2 = detect_transferable(t1, &b2, config.family, config.detection_c0)?;
    let kept: Vec<&DataMatrix> = b1
        .iter()
        .zip(&m1)
        .chain(b2.iter().zip(&m2))
        .filter(|(_, k)| **k)
        .map(|(b, _)| b)
        .collect();
    let count = |m: &[bool]| m.iter().filter(|v| **v).count();
    Ok(PoolSelection {
        data: if kept.is_empty() {
            None
        } else {
            Some(DataMatrix::concat(&kept)?)
        },
        batches: [b1.len(), b2.len()],
        transferable: [count(&m1), count(&m2)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn linear(seed: u64, n: usize, beta: &[f64], sd: f64) -> DataMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = beta.len();
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let noise = Normal::new(0.0, sd).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + noise.sample(&mut rng))
            .collect();
        DataMatrix::from_xy(&x, &y).unwrap()
    }

    const BETA: [f64; 3] = [2.0, -1.0, 0.5];

    #[test]
    fn batch_split_keeps_tail() {
        let d = linear(1, 23, &BETA, 1.0);
        let b = batch_split(&d, 10);
        assert_eq!(
            b.iter().map(|m| m.nrows()).collect::<Vec<_>>(),
            vec![10, 10, 3]
        );
    }

    #[test]
    fn no_sources_is_target_lasso() {
        let t = linear(2, 60, &BETA, 1.0);
        let (x, y) = xy(&t);
        let direct = fit_cv(Family::Linear, &x, &y, None, &cv_config())
            .unwrap()
            .0;
        assert_eq!(
            two_step_transfer_fit(&t, &[], Family::Linear).unwrap(),
            direct
        );
        assert!(detect_transferable(&t, &[], Family::Linear, 2.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn masked_sources_have_no_effect() {
        let t = linear(3, 60, &BETA, 1.0);
        let bad = linear(4, 200, &[-8.0, 9.0, 6.0], 1.0);
        let (fit, mask) = adapt(&t, &[bad], Family::Linear, 2.0).unwrap();
        assert_eq!(mask, vec![false]);
        assert_eq!(fit, two_step_transfer_fit(&t, &[], Family::Linear).unwrap());
    }

    #[test]
    fn small_target_rejected() {
        let t = linear(5, 9, &BETA, 1.0);
        assert!(detect_transferable(&t, std::slice::from_ref(&t), Family::Linear, 2.0).is_err());
    }

    #[test]
    fn adaptability_examples() {
        let f = |c: Vec<f64>| FitResult {
            family: Family::Linear,
            coefficients: c,
            intercept: 0.0,
            lambda: 0.0,
            iterations: 0,
            converged: true,
        };
        assert_eq!(adaptability(&f(vec![1.0, 0.0]), &f(vec![1.0, 0.0])), 0.0);
        assert!((adaptability(&f(vec![3.0, 4.0]), &f(vec![0.0, 0.0])) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_ratio_and_bookkeeping() {
        let s1 = linear(10, 200, &BETA, 1.0);
        let s2 = linear(11, 200, &BETA, 1.0);
        let t1 = linear(12, 50, &BETA, 1.0);
        let t2 = linear(13, 50, &BETA, 1.0);
        let test = linear(14, 100, &BETA, 1.0);
        let mut cfg = TransferConfig::new(vec![0.5], 50, 9);
        cfg.iterations = 4;
        let rep = dual_source_select(&s1, &s2, &t1, &t2, &test, &cfg).unwrap();
        assert_eq!(rep.rho_star, 0.5);
        let again = dual_source_select(&s1, &s2, &t1, &t2, &test, &cfg).unwrap();
        assert_eq!(rep, again);
        let r = &rep.per_rho[0];
        assert_eq!(r.iterations.len(), 4);
        assert_eq!(r.iterations[0].batches, [2, 2]);
    }

    #[test]
    fn config_validation() {
        assert!(TransferConfig::new(vec![], 10, 0).validate().is_err());
        assert!(TransferConfig::new(vec![1.5], 10, 0).validate().is_err());
        assert!(TransferConfig::new(vec![0.5], 0, 0).validate().is_err());
        let cfg: TransferConfig =
            serde_json::from_str(r#"{"ratio_set":[0.1],"batch_size":100}"#).unwrap();
        assert_eq!(cfg.iterations, 100);
        assert_eq!(cfg.detection_c0, 2.0);
        assert_eq!(cfg.validation_factor, 1.25);
    }
}
