//! Image feature maps for latent-space filtering.
//!
//! [`FeatureKind::DownsamplePca`] is fitted on the original images only and
//! then applied unchanged to generated images, so the candidate pool never
//! moves the reference frame.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::codec::GrayImage;
use crate::error::{Error, Result};
use crate::generators::RemoteGenerator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    RemoteLatent,
    DownsamplePca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    #[serde(default = "default_downsample")]
    pub downsample_to: (usize, usize),
    #[serde(default = "default_pca_dims")]
    pub pca_dims: usize,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_downsample() -> (usize, usize) {
    (16, 16)
}

fn default_pca_dims() -> usize {
    32
}

fn default_true() -> bool {
    true
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            kind: FeatureKind::DownsamplePca,
            downsample_to: default_downsample(),
            pca_dims: default_pca_dims(),
            standardize: true,
        }
    }
}

/// Nearest-neighbour resample to `(h, w)`, flattened row-major.
pub fn downsample_nearest(image: &GrayImage, (h, w): (usize, usize)) -> Vec<f64> {
    let (sh, sw) = (image.height(), image.width());
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let sr = (((r as f64 + 0.5) * sh as f64 / h as f64) as usize).min(sh - 1);
        for c in 0..w {
            let sc = (((c as f64 + 0.5) * sw as f64 / w as f64) as usize).min(sw - 1);
            out.push(image.get(sr, sc));
        }
    }
    out
}

/// Fitted downsample + PCA (+ standardisation) map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: FeatureSpec,
    mean: DVector<f64>,
    /// Columns are principal directions, ordered by decreasing variance.
    basis: DMatrix<f64>,
    score_mean: Vec<f64>,
    score_scale: Vec<f64>,
}

impl FeatureMap {
    pub fn fit(originals: &[GrayImage], spec: &FeatureSpec) -> Result<Self> {
        if originals.is_empty() {
            return Err(Error::invalid(
                "feature map needs at least one original image",
            ));
        }
        let (h, w) = spec.downsample_to;
        let flat = h * w;
        if flat == 0 {
            return Err(Error::invalid("downsample size must be positive"));
        }
        if spec.pca_dims == 0 || spec.pca_dims > flat {
            return Err(Error::invalid(format!(
                "pca_dims {} must be in 1..={flat}",
                spec.pca_dims
            )));
        }
        let data = flatten(originals, spec.downsample_to);
        let m = data.nrows();
        let mean = DVector::from_fn(flat, |j, _| data.column(j).sum() / m as f64);
        let centered = DMatrix::from_fn(m, flat, |i, j| data[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / m as f64;
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..flat).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let mut basis = DMatrix::zeros(flat, spec.pca_dims);
        for (k, &src) in order.iter().take(spec.pca_dims).enumerate() {
            let mut v = eig.eigenvectors.column(src).into_owned();
            // Sign convention: the largest-magnitude entry is positive.
            let pivot = v.iamax();
            if v[pivot] < 0.0 {
                v.neg_mut();
            }
            basis.set_column(k, &v);
        }

        let mut map = Self {
            spec: spec.clone(),
            mean,
            basis,
            score_mean: vec![0.0; spec.pca_dims],
            score_scale: vec![1.0; spec.pca_dims],
        };
        if spec.standardize {
            let scores = map.project(&data);
            for k in 0..spec.pca_dims {
                let col = scores.column(k);
                let mu = col.sum() / m as f64;
                let sd = (col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / m as f64).sqrt();
                map.score_mean[k] = mu;
                map.score_scale[k] = if sd > 1e-12 { sd } else { 1.0 };
            }
        }
        Ok(map)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    fn project(&self, flat: &DMatrix<f64>) -> DMatrix<f64> {
        let centered = DMatrix::from_fn(flat.nrows(), flat.ncols(), |i, j| {
            flat[(i, j)] - self.mean[j]
        });
        centered * &self.basis
    }

    pub fn transform(&self, images: &[GrayImage]) -> Result<SampleSet> {
        if images.is_empty() {
            return Err(Error::invalid("no images to transform"));
        }
        let mut scores = self.project(&flatten(images, self.spec.downsample_to));
        for k in 0..scores.ncols() {
            for i in 0..scores.nrows() {
                scores[(i, k)] = (scores[(i, k)] - self.score_mean[k]) / self.score_scale[k];
            }
        }
        SampleSet::new(scores)
    }
}

fn flatten(images: &[GrayImage], size: (usize, usize)) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = images
        .iter()
        .map(|img| downsample_nearest(img, size))
        .collect();
    DMatrix::from_fn(rows.len(), size.0 * size.1, |i, j| rows[i][j])
}

fn remote_latents(images: &[GrayImage], service: &RemoteGenerator) -> Result<SampleSet> {
    let mut rows = Vec::with_capacity(images.len());
    for img in images {
        rows.push(service.encode_latent(img)?.latent);
    }
    let q = rows[0].len();
    if rows.iter().any(|r| r.len() != q) {
        return Err(Error::MalformedResponse(
            "latents of differing sizes".into(),
        ));
    }
    SampleSet::from_rows(&rows)
}

/// Features for the original and generated images, in that order.
pub fn extract_features(
    originals: &[GrayImage],
    generated: &[GrayImage],
    spec: &FeatureSpec,
    service: Option<&RemoteGenerator>,
) -> Result<(SampleSet, SampleSet)> {
    if originals.is_empty() || generated.is_empty() {
        return Err(Error::invalid(
            "feature extraction needs non-empty image lists",
        ));
    }
    match spec.kind {
        FeatureKind::DownsamplePca => {
            let map = FeatureMap::fit(originals, spec)?;
            Ok((map.transform(originals)?, map.transform(generated)?))
        }
        FeatureKind::RemoteLatent => {
            let service = service
                .ok_or_else(|| Error::invalid("remote_latent features need a service endpoint"))?;
            let a = remote_latents(originals, service)?;
            let b = remote_latents(generated, service)?;
            if a.dim() != b.dim() {
                return Err(Error::mismatch(a.dim(), b.dim()));
            }
            Ok((a, b))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::sq_dist;
    use rand::{Rng, SeedableRng};

    fn images(n: usize, h: usize, w: usize, seed: u64) -> Vec<GrayImage> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                GrayImage::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
            })
            .collect()
    }

    #[test]
    fn shape_contract() {
        let orig = images(40, 28, 28, 1);
        let gen = images(10, 28, 28, 2);
        let (a, b) = extract_features(&orig, &gen, &FeatureSpec::default(), None).unwrap();
        assert_eq!((a.len(), a.dim()), (40, 32));
        assert_eq!((b.len(), b.dim()), (10, 32));
    }

    #[test]
    fn identical_images_give_identical_rows() {
        let orig = images(8, 10, 10, 3);
        let spec = FeatureSpec {
            downsample_to: (5, 5),
            pca_dims: 4,
            ..FeatureSpec::default()
        };
        let gen = vec![orig[2].clone(), orig[2].clone()];
        let (a, b) = extract_features(&orig, &gen, &spec, None).unwrap();
        assert_eq!(b.row(0), b.row(1));
        for (x, y) in a.row(2).iter().zip(b.row(0)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn full_rank_pca_is_a_rotation() {
        let orig = images(30, 4, 4, 4);
        let spec = FeatureSpec {
            downsample_to: (4, 4),
            pca_dims: 16,
            standardize: false,
            ..FeatureSpec::default()
        };
        let map = FeatureMap::fit(&orig, &spec).unwrap();
        let feats = map.transform(&orig).unwrap();
        let flat = flatten(&orig, (4, 4));
        for i in 0..30 {
            for j in 0..30 {
                let d_raw = sq_dist(&flat, i, &flat, j).sqrt();
                let d_pca = sq_dist(feats.points(), i, feats.points(), j).sqrt();
                assert!((d_raw - d_pca).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn basis_ignores_generated_set() {
        let orig = images(12, 8, 8, 5);
        let spec = FeatureSpec {
            downsample_to: (8, 8),
            pca_dims: 6,
            ..FeatureSpec::default()
        };
        let mut gen = images(9, 8, 8, 6);
        let (_, b1) = extract_features(&orig, &gen, &spec, None).unwrap();
        gen.reverse();
        let (_, b2) = extract_features(&orig, &gen, &spec, None).unwrap();
        for i in 0..9 {
            assert_eq!(b1.row(i), b2.row(8 - i));
        }
    }

    #[test]
    fn rejects_oversized_pca() {
        let orig = images(3, 4, 4, 7);
        let spec = FeatureSpec {
            downsample_to: (2, 2),
            pca_dims: 5,
            ..FeatureSpec::default()
        };
        assert!(FeatureMap::fit(&orig, &spec).is_err());
        let spec = FeatureSpec {
            kind: FeatureKind::RemoteLatent,
            ..FeatureSpec::default()
        };
        assert!(extract_features(&orig, &orig, &spec, None).is_err());
    }

    #[test]
    fn nearest_downsample() {
        let img = GrayImage::new(2, 4, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
        assert_eq!(downsample_nearest(&img, (1, 2)), vec![0.5, 0.7]);
        assert_eq!(downsample_nearest(&img, (2, 4)), img.pixels().to_vec());
    }
}
