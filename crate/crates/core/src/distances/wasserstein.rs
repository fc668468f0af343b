use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{check_dims, SampleSet};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_PROJECTIONS: usize = 64;

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Exact Wasserstein-1 between two uniform empirical measures on the line.
pub fn w1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    check_finite(a, "first sample")?;
    check_finite(b, "second sample")?;
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len(), sb.len());
    if na == nb {
        let total: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
        return Ok(total / na as f64);
    }
    // Walk the merged quantile breakpoints i/na and j/nb. Comparing
    // (i+1)*nb with (j+1)*na keeps the breakpoints exact.
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0.0;
    let mut total = 0.0;
    let denom = (na * nb) as f64;
    while i < na && j < nb {
        let ea = (i + 1) * nb;
        let eb = (j + 1) * na;
        let next = ea.min(eb);
        total += (next as f64 - prev) * (sa[i] - sb[j]).abs();
        prev = next as f64;
        if ea == next {
            i += 1;
        }
        if eb == next {
            j += 1;
        }
    }
    Ok(total / denom)
}

/// Wasserstein-1 on the line with arbitrary probability weights.
pub fn w1_1d_weighted(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> Result<f64> {
    check_finite(a, "first sample")?;
    check_finite(b, "second sample")?;
    if a.len() != wa.len() || b.len() != wb.len() {
        return Err(Error::invalid("weights do not match sample sizes"));
    }
    let cumulative = |v: &[f64], w: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&x, &y| v[x].total_cmp(&v[y]));
        let mut acc = 0.0;
        let mut out: Vec<(f64, f64)> = idx
            .iter()
            .map(|&k| {
                acc += w[k];
                (v[k], acc)
            })
            .collect();
        if let Some(last) = out.last_mut() {
            last.1 = 1.0;
        }
        out
    };
    let ca = cumulative(a, wa);
    let cb = cumulative(b, wb);
    let (mut i, mut j) = (0, 0);
    let mut prev = 0.0;
    let mut total = 0.0;
    while i < ca.len() && j < cb.len() {
        let next = ca[i].1.min(cb[j].1);
        total += (next - prev).max(0.0) * (ca[i].0 - cb[j].0).abs();
        prev = next;
        if ca[i].1 <= next {
            i += 1;
        }
        if cb[j].1 <= next {
            j += 1;
        }
    }
    Ok(total)
}

/// Uniform random unit vector for projection `index` of stream `seed`.
pub fn random_direction(dim: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[0x736c_6963, index as u64]);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn w1_sets_1d(a: &[f64], sa: &SampleSet, b: &[f64], sb: &SampleSet) -> Result<f64> {
    if sa.is_uniform() && sb.is_uniform() {
        w1_1d(a, b)
    } else {
        w1_1d_weighted(a, &sa.weights_or_uniform(), b, &sb.weights_or_uniform())
    }
}

/// Sliced Wasserstein-1: mean of exact 1-D distances over seeded random
/// directions. One-dimensional sets are compared directly.
pub fn sliced_w1(a: &SampleSet, b: &SampleSet, n_projections: usize, seed: u64) -> Result<f64> {
    check_dims(a, b)?;
    if a.dim() == 1 {
        return w1_sets_1d(&a.column(0), a, &b.column(0), b);
    }
    if n_projections == 0 {
        return Err(Error::invalid("n_projections must be positive"));
    }
    let per_dir: Vec<f64> = (0..n_projections)
        .into_par_iter()
        .map(|l| {
            let u = random_direction(a.dim(), seed, l);
            w1_sets_1d(&a.project(&u), a, &b.project(&u), b)
        })
        .collect::<Result<_>>()?;
    Ok(per_dir.iter().sum::<f64>() / n_projections as f64)
}
