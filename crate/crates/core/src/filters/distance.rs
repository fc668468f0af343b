use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{DataMatrix, GrayImage};
use crate::distances::{
    median_heuristic, tv_hist, w1_1d, Bandwidth, SampleSet, DEFAULT_PROJECTIONS, DEFAULT_TV_BINS,
};
use crate::error::{Error, Result};

pub const DEFAULT_K_NEAREST: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Wasserstein,
    Mmd,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterPolicy {
    /// Keep the `ceil(q * N)` closest candidates.
    Quantile { q: f64 },
    /// Keep every candidate with distance `<= tau`.
    Absolute { tau: f64 },
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterPolicy::Quantile { q } if !(q > 0.0 && q <= 1.0) => {
                Err(Error::invalid(format!("quantile {q} outside (0, 1]")))
            }
            FilterPolicy::Absolute { tau } if !(tau >= 0.0) => {
                Err(Error::invalid(format!("threshold {tau} must be >= 0")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Ascending candidate indices.
    pub retained_indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub policy: FilterPolicy,
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOptions {
    pub k_nearest: usize,
    /// Candidate `i` is compared with original `pairing[i]` (Wasserstein only).
    pub pairing: Option<Vec<usize>>,
    /// `Auto` takes the median heuristic over the originals alone.
    pub bandwidth: Bandwidth,
    pub tv_bins: usize,
    pub n_projections: usize,
    pub seed: u64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            k_nearest: DEFAULT_K_NEAREST,
            pairing: None,
            bandwidth: Bandwidth::Auto,
            tv_bins: DEFAULT_TV_BINS,
            n_projections: DEFAULT_PROJECTIONS,
            seed: 0,
        }
    }
}

pub fn retained_count(n: usize, q: f64) -> usize {
    ((q * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Indices kept by `policy`, ascending. Quantile ties are broken by index.
pub fn apply_policy(distances: &[f64], policy: FilterPolicy) -> Result<Vec<usize>> {
    policy.validate()?;
    if distances.iter().any(|d| d.is_nan()) {
        return Err(Error::NonFinite("candidate distance".into()));
    }
    let mut kept: Vec<usize> = match policy {
        FilterPolicy::Quantile { q } => {
            let mut order: Vec<usize> = (0..distances.len()).collect();
            order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
            order.truncate(retained_count(distances.len(), q));
            order
        }
        FilterPolicy::Absolute { tau } => (0..distances.len())
            .filter(|&i| distances[i] <= tau)
            .collect(),
    };
    kept.sort_unstable();
    Ok(kept)
}

pub fn filter_candidates(
    originals: &SampleSet,
    candidates: &SampleSet,
    metric: DistanceMetric,
    policy: FilterPolicy,
) -> Result<FilterReport> {
    filter_candidates_with(
        originals,
        candidates,
        metric,
        policy,
        &FilterOptions::default(),
    )
}

pub fn filter_candidates_with(
    originals: &SampleSet,
    candidates: &SampleSet,
    metric: DistanceMetric,
    policy: FilterPolicy,
    options: &FilterOptions,
) -> Result<FilterReport> {
    policy.validate()?;
    let distances = candidate_distances(originals, candidates, metric, options)?;
    Ok(FilterReport {
        retained_indices: apply_policy(&distances, policy)?,
        distances,
        policy,
        metric,
    })
}

/// Per-candidate distance to the originals.
///
/// Wasserstein: 1-D W1 between a candidate's coordinates and its paired
/// original's when a pairing is given, otherwise the mean Euclidean
/// distance to the `k_nearest` closest originals. MMD and TV score the
/// increase from adding the candidate to the originals.
pub fn candidate_distances(
    originals: &SampleSet,
    candidates: &SampleSet,
    metric: DistanceMetric,
    options: &FilterOptions,
) -> Result<Vec<f64>> {
    if originals.dim() != candidates.dim() {
        return Err(Error::mismatch(originals.dim(), candidates.dim()));
    }
    let m = originals.len();
    let op = originals.points();
    match metric {
        DistanceMetric::Wasserstein => match &options.pairing {
            Some(pair) => {
                if pair.len() != candidates.len() {
                    return Err(Error::mismatch(candidates.len(), pair.len()));
                }
                if let Some(p) = pair.iter().find(|p| **p >= m) {
                    return Err(Error::invalid(format!("pairing index {p} out of range")));
                }
                (0..candidates.len())
                    .into_par_iter()
                    .map(|i| w1_1d(&candidates.row(i), &originals.row(pair[i])))
                    .collect()
            }
            None => {
                if options.k_nearest == 0 {
                    return Err(Error::invalid("k_nearest must be at least 1"));
                }
                let k = options.k_nearest.min(m);
                let cp = candidates.points();
                Ok((0..candidates.len())
                    .into_par_iter()
                    .map(|i| {
                        let mut d: Vec<f64> = (0..m)
                            .map(|j| crate::distances::sq_dist(cp, i, op, j).sqrt())
                            .collect();
                        d.sort_by(f64::total_cmp);
                        d[..k].iter().sum::<f64>() / k as f64
                    })
                    .collect())
            }
        },
        DistanceMetric::Mmd => {
            let sigma = match options.bandwidth {
                Bandwidth::Auto => median_heuristic(originals),
                Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
                Bandwidth::Fixed(s) => {
                    return Err(Error::invalid(format!("bandwidth {s} must be positive")))
                }
            };
            let gamma = 1.0 / (2.0 * sigma * sigma);
            let mut s_oo = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s_oo += (-gamma * crate::distances::sq_dist(op, i, op, j)).exp();
                }
            }
            let cp = candidates.points();
            let mf = m as f64;
            Ok((0..candidates.len())
                .into_par_iter()
                .map(|c| {
                    let s_c: f64 = (0..m)
                        .map(|j| (-gamma * crate::distances::sq_dist(cp, c, op, j)).exp())
                        .sum();
                    let xx = s_oo / (mf * mf);
                    let yy = (s_oo + 2.0 * s_c + 1.0) / ((mf + 1.0) * (mf + 1.0));
                    let xy = (s_oo + s_c) / (mf * (mf + 1.0));
                    (xx + yy - 2.0 * xy).max(0.0)
                })
                .collect())
        }
        DistanceMetric::Tv => (0..candidates.len())
            .into_par_iter()
            .map(|c| {
                let with = originals.pooled(&candidates.select(&[c])?)?;
                tv_hist(
                    originals,
                    &with,
                    options.tv_bins,
                    options.n_projections,
                    options.seed,
                )
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented<T> {
    pub data: T,
    pub provenance: Vec<Provenance>,
}

fn provenance(n_orig: usize, n_new: usize) -> Vec<Provenance> {
    let mut p = vec![Provenance::Original; n_orig];
    p.extend(std::iter::repeat_n(Provenance::Synthetic, n_new));
    p
}

/// Originals followed by the retained rows in their given order.
pub fn augment_rows(original: &DataMatrix, retained: &DataMatrix) -> Result<Augmented<DataMatrix>> {
    Ok(Augmented {
        data: original.vstack(retained)?,
        provenance: provenance(original.nrows(), retained.nrows()),
    })
}

pub fn augment_images(
    original: &[GrayImage],
    retained: &[GrayImage],
) -> Result<Augmented<Vec<GrayImage>>> {
    if let Some(first) = original.first().or(retained.first()) {
        let shape = (first.height(), first.width());
        if let Some(bad) = original
            .iter()
            .chain(retained)
            .find(|im| (im.height(), im.width()) != shape)
        {
            return Err(Error::mismatch(
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", bad.height(), bad.width()),
            ));
        }
    }
    Ok(Augmented {
        data: original.iter().chain(retained).cloned().collect(),
        provenance: provenance(original.len(), retained.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::{mmd, MmdEstimator};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn set(rows: &[Vec<f64>]) -> SampleSet {
        SampleSet::from_rows(rows).unwrap()
    }

    #[test]
    fn quantile_counts() {
        let d: Vec<f64> = (0..10).map(|i| (10 - i) as f64).collect();
        let kept = apply_policy(&d, FilterPolicy::Quantile { q: 0.6 }).unwrap();
        assert_eq!(kept, vec![4, 5, 6, 7, 8, 9]);
        assert_eq!(
            apply_policy(&d, FilterPolicy::Quantile { q: 1.0 })
                .unwrap()
                .len(),
            10
        );
        assert_eq!(retained_count(600, 0.8), 480);
        assert_eq!(retained_count(7, 0.5), 4);
    }

    #[test]
    fn ties_keep_lower_index() {
        let kept = apply_policy(&[1.0, 0.0, 1.0, 1.0], FilterPolicy::Quantile { q: 0.5 }).unwrap();
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn policy_errors() {
        assert!(apply_policy(&[1.0], FilterPolicy::Quantile { q: 0.0 }).is_err());
        assert!(apply_policy(&[1.0], FilterPolicy::Quantile { q: 1.1 }).is_err());
        assert!(apply_policy(&[1.0], FilterPolicy::Absolute { tau: -0.1 }).is_err());
        assert_eq!(
            apply_policy(&[0.5, 1.5], FilterPolicy::Absolute { tau: 1.0 }).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn paired_identical_is_zero() {
        let orig = set(&[vec![0.1, 0.5, 0.9], vec![0.3, 0.3, 0.3]]);
        let cand = set(&[vec![0.9, 0.1, 0.5], vec![1.0, 1.0, 1.0]]);
        let opts = FilterOptions {
            pairing: Some(vec![0, 1]),
            ..FilterOptions::default()
        };
        let rep = filter_candidates_with(
            &orig,
            &cand,
            DistanceMetric::Wasserstein,
            FilterPolicy::Quantile { q: 0.1 },
            &opts,
        )
        .unwrap();
        assert_eq!(rep.distances[0], 0.0);
        assert!((rep.distances[1] - 0.7).abs() < 1e-12);
        assert_eq!(rep.retained_indices, vec![0]);
    }

    #[test]
    fn knn_mean_distance() {
        let orig = set(&[vec![0.0], vec![1.0], vec![3.0]]);
        let cand = set(&[vec![0.0]]);
        let opts = FilterOptions {
            k_nearest: 2,
            ..FilterOptions::default()
        };
        let d = candidate_distances(&orig, &cand, DistanceMetric::Wasserstein, &opts).unwrap();
        assert_eq!(d, vec![0.5]);
        // K larger than the originals caps at all of them.
        let d = candidate_distances(
            &orig,
            &cand,
            DistanceMetric::Wasserstein,
            &FilterOptions::default(),
        )
        .unwrap();
        assert!((d[0] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn leave_one_in_mmd_matches_direct() {
        let orig = set(&[
            vec![0.0, 0.1],
            vec![0.4, 0.2],
            vec![0.9, 0.7],
            vec![0.3, 0.3],
        ]);
        let cand = set(&[vec![0.5, 0.5], vec![3.0, -1.0]]);
        let sigma = median_heuristic(&orig);
        let d = candidate_distances(&orig, &cand, DistanceMetric::Mmd, &FilterOptions::default())
            .unwrap();
        for c in 0..2 {
            let with = orig.pooled(&cand.select(&[c]).unwrap()).unwrap();
            let direct = mmd(&orig, &with, Bandwidth::Fixed(sigma), MmdEstimator::Biased).unwrap();
            assert!((d[c] - direct).abs() < 1e-12);
        }
        assert!(d[1] > d[0]);
    }

    #[test]
    fn dimension_mismatch() {
        let orig = set(&[vec![0.0, 0.1]]);
        let cand = set(&[vec![0.0]]);
        assert!(filter_candidates(
            &orig,
            &cand,
            DistanceMetric::Tv,
            FilterPolicy::Quantile { q: 0.5 }
        )
        .is_err());
    }

    #[test]
    fn augment_sizes_and_flags() {
        let o = DataMatrix::new(DMatrix::from_element(600, 4, 0.0)).unwrap();
        let r = DataMatrix::new(DMatrix::from_element(480, 4, 1.0)).unwrap();
        let a = augment_rows(&o, &r).unwrap();
        assert_eq!(a.data.nrows(), 1080);
        assert!(a.provenance[..600]
            .iter()
            .all(|p| *p == Provenance::Original));
        assert!(a.provenance[600..]
            .iter()
            .all(|p| *p == Provenance::Synthetic));
        let empty = o.select_rows(&[]);
        assert_eq!(augment_rows(&o, &empty).unwrap().data, o);
        let bad = DataMatrix::new(DMatrix::from_element(3, 5, 0.0)).unwrap();
        assert!(augment_rows(&o, &bad).is_err());
    }

    #[test]
    fn augment_images_checks_shape() {
        let a = GrayImage::filled(2, 3, 0.1).unwrap();
        let b = GrayImage::filled(3, 2, 0.1).unwrap();
        assert_eq!(
            augment_images(std::slice::from_ref(&a), std::slice::from_ref(&a))
                .unwrap()
                .data
                .len(),
            2
        );
        assert!(augment_images(&[a], &[b]).is_err());
    }

    proptest! {
        #[test]
        fn threshold_coherence(d in proptest::collection::vec(0.0f64..5.0, 1..60), q in 0.01f64..1.0) {
            let kept = apply_policy(&d, FilterPolicy::Quantile { q }).unwrap();
            let rejected: Vec<usize> = (0..d.len()).filter(|i| !kept.contains(i)).collect();
            let max_kept = kept.iter().map(|&i| d[i]).fold(f64::NEG_INFINITY, f64::max);
            let min_rej = rejected.iter().map(|&i| d[i]).fold(f64::INFINITY, f64::min);
            prop_assert!(max_kept <= min_rej);
            prop_assert_eq!(kept.len(), retained_count(d.len(), q));
        }
    }
}
