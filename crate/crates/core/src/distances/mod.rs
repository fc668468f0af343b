//! Two-sample distances: exact and sliced Wasserstein-1, Gaussian-kernel
//! MMD, histogram total variation, plus the feature map that turns images
//! into comparable vectors.

mod features;
mod mmd;
mod tv;
mod wasserstein;

pub use features::{downsample_nearest, extract_features, FeatureKind, FeatureMap, FeatureSpec};
pub use mmd::{median_heuristic, mmd, Bandwidth, MmdEstimator};
pub use tv::{tv_hist, DEFAULT_TV_BINS};
pub use wasserstein::{random_direction, sliced_w1, w1_1d, w1_1d_weighted, DEFAULT_PROJECTIONS};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Empirical distribution: `m` points in `q` dimensions with optional
/// probability weights (uniform when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: DMatrix<f64>,
    weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::invalid(
                "sample set needs at least one point and one dimension",
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample set".into()));
        }
        Ok(Self {
            points,
            weights: None,
        })
    }

    pub fn weighted(points: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        let set = Self::new(points)?;
        if weights.len() != set.len() {
            return Err(Error::mismatch(set.len(), weights.len()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            weights: Some(weights),
            ..set
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let q = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != q) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(DMatrix::from_fn(rows.len(), q, |i, j| rows[i][j]))
    }

    pub fn from_1d(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    /// Weights, materialising the uniform default.
    pub fn weights_or_uniform(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.len() as f64; self.len()])
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    /// The single coordinate of a 1-D set.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.points.column(j).iter().copied().collect()
    }

    /// Points projected on `direction`.
    pub fn project(&self, direction: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                self.points
                    .row(i)
                    .iter()
                    .zip(direction)
                    .map(|(x, u)| x * u)
                    .sum()
            })
            .collect()
    }

    /// Uniform-weight union of two sets (weights are dropped).
    pub fn pooled(&self, other: &SampleSet) -> Result<SampleSet> {
        check_dims(self, other)?;
        let (m, n) = (self.len(), other.len());
        SampleSet::new(DMatrix::from_fn(m + n, self.dim(), |i, j| {
            if i < m {
                self.points[(i, j)]
            } else {
                other.points[(i - m, j)]
            }
        }))
    }

    pub fn select(&self, indices: &[usize]) -> Result<SampleSet> {
        SampleSet::new(DMatrix::from_fn(indices.len(), self.dim(), |i, j| {
            self.points[(indices[i], j)]
        }))
    }
}

pub(crate) fn check_dims(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::mismatch(
            format!("dimension {}", a.dim()),
            format!("dimension {}", b.dim()),
        ));
    }
    Ok(())
}

pub(crate) fn sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols())
        .map(|k| (a[(i, k)] - b[(j, k)]).powi(2))
        .sum()
}
