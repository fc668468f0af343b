use serde::{Deserialize, Serialize};

use super::{check_dims, sq_dist, SampleSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance of the pooled sample.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    /// V-statistic, always >= 0.
    Biased,
    /// U-statistic, may be negative.
    Unbiased,
}

/// Median of all pairwise Euclidean distances; 1.0 when that median is 0
/// or there is only one point.
pub fn median_heuristic(points: &SampleSet) -> f64 {
    let p = points.points();
    let m = points.len();
    let mut d = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            d.push(sq_dist(p, i, p, j).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 0 {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

pub(crate) fn resolve_bandwidth(bandwidth: Bandwidth, a: &SampleSet, b: &SampleSet) -> Result<f64> {
    match bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
        Bandwidth::Fixed(s) => Err(Error::invalid(format!("bandwidth {s} must be positive"))),
        Bandwidth::Auto => Ok(median_heuristic(&a.pooled(b)?)),
    }
}

/// Weighted Gram sum `sum_ij wx_i wy_j k(x_i, y_j)`, optionally skipping the
/// diagonal of a set against itself.
fn gram_sum(
    x: &SampleSet,
    wx: &[f64],
    y: &SampleSet,
    wy: &[f64],
    gamma: f64,
    skip_diag: bool,
) -> f64 {
    let (px, py) = (x.points(), y.points());
    let mut total = 0.0;
    for i in 0..x.len() {
        let mut row = 0.0;
        for j in 0..y.len() {
            if skip_diag && i == j {
                continue;
            }
            row += wy[j] * (-gamma * sq_dist(px, i, py, j)).exp();
        }
        total += wx[i] * row;
    }
    total
}

/// Squared MMD with a Gaussian kernel `exp(-|x - y|^2 / (2 sigma^2))`.
///
/// The biased estimator honours sample weights; the unbiased one requires
/// uniform weights and at least two points per set.
pub fn mmd(
    a: &SampleSet,
    b: &SampleSet,
    bandwidth: Bandwidth,
    estimator: MmdEstimator,
) -> Result<f64> {
    check_dims(a, b)?;
    let sigma = resolve_bandwidth(bandwidth, a, b)?;
    let gamma = 1.0 / (2.0 * sigma * sigma);
    match estimator {
        MmdEstimator::Biased => {
            let (wa, wb) = (a.weights_or_uniform(), b.weights_or_uniform());
            let xx = gram_sum(a, &wa, a, &wa, gamma, false);
            let yy = gram_sum(b, &wb, b, &wb, gamma, false);
            let xy = gram_sum(a, &wa, b, &wb, gamma, false);
            Ok((xx + yy - 2.0 * xy).max(0.0))
        }
        MmdEstimator::Unbiased => {
            if !a.is_uniform() || !b.is_uniform() {
                return Err(Error::invalid("unbiased MMD needs uniform weights"));
            }
            let (m, n) = (a.len(), b.len());
            if m < 2 || n < 2 {
                return Err(Error::invalid(
                    "unbiased MMD needs at least 2 points per set",
                ));
            }
            let (ua, ub) = (vec![1.0; m], vec![1.0; n]);
            let xx = gram_sum(a, &ua, a, &ua, gamma, true) / (m * (m - 1)) as f64;
            let yy = gram_sum(b, &ub, b, &ub, gamma, true) / (n * (n - 1)) as f64;
            let xy = gram_sum(a, &ua, b, &ub, gamma, false) / (m * n) as f64;
            Ok(xx + yy - 2.0 * xy)
        }
    }
}
