use rayon::prelude::*;

use super::{check_dims, random_direction, SampleSet};
use crate::error::{Error, Result};

pub const DEFAULT_TV_BINS: usize = 32;

fn histogram(values: &[f64], weights: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for (v, w) in values.iter().zip(weights) {
        let b = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        h[b] += w;
    }
    h
}

fn tv_line(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64], bins: usize) -> f64 {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let p = histogram(a, wa, lo, width, bins);
    let q = histogram(b, wb, lo, width, bins);
    0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Total variation between equal-width histograms over the pooled range,
/// averaged over seeded projections (raw coordinate when `q = 1`).
pub fn tv_hist(
    a: &SampleSet,
    b: &SampleSet,
    bins: usize,
    n_projections: usize,
    seed: u64,
) -> Result<f64> {
    check_dims(a, b)?;
    if bins == 0 {
        return Err(Error::invalid("bins must be positive"));
    }
    let (wa, wb) = (a.weights_or_uniform(), b.weights_or_uniform());
    if a.dim() == 1 {
        return Ok(tv_line(&a.column(0), &wa, &b.column(0), &wb, bins));
    }
    if n_projections == 0 {
        return Err(Error::invalid("n_projections must be positive"));
    }
    let per_dir: Vec<f64> = (0..n_projections)
        .into_par_iter()
        .map(|l| {
            let u = random_direction(a.dim(), seed, l);
            tv_line(&a.project(&u), &wa, &b.project(&u), &wb, bins)
        })
        .collect();
    Ok(per_dir.iter().sum::<f64>() / n_projections as f64)
}
