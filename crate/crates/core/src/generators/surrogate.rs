//! GPU-free stand-in for img2img diffusion.
//!
//! `out = clamp01((1 - k) * input + k * noise)`, where `noise` is a
//! per-column moment-matched Gaussian field smoothed by a 3x1 vertical
//! moving average. The recipe is fixed so that other implementations (the
//! stub diffusion service) can reproduce it bit-for-bit:
//!
//! 1. `k < 0.002`: return the input unchanged.
//! 2. Per column `j`: `mean_j = sum / h` and `sd_j = sqrt(sum((x - mean_j)^2) / h)`,
//!    summing rows top to bottom.
//! 3. Seed [`SplitMix64`] with the request seed and draw, in row-major order,
//!    `raw[i][j] = mean_j + sd_j * z` with `z` from the Box-Muller cosine branch.
//! 4. `noise[i][j]` is the mean of `raw[i-1][j], raw[i][j], raw[i+1][j]`
//!    (in that order, skipping rows outside the image).
//! 5. `out = min(max((1 - k) * x + k * noise, 0), 1)`.

use super::{Backend, GenRequest, GenResult, Generator};
use crate::codec::GrayImage;
use crate::error::Result;
use crate::rng::SplitMix64;

/// Strengths below this return the input unchanged.
pub const IDENTITY_BYPASS_STRENGTH: f64 = 0.002;

#[derive(Debug, Clone, Copy, Default)]
pub struct Surrogate;

impl Surrogate {
    pub fn noise_field(image: &GrayImage, seed: u64) -> Vec<f64> {
        let (h, w) = (image.height(), image.width());
        let mut means = vec![0.0; w];
        let mut sds = vec![0.0; w];
        for j in 0..w {
            let mut sum = 0.0;
            for i in 0..h {
                sum += image.get(i, j);
            }
            let mean = sum / h as f64;
            let mut ss = 0.0;
            for i in 0..h {
                let d = image.get(i, j) - mean;
                ss += d * d;
            }
            means[j] = mean;
            sds[j] = (ss / h as f64).sqrt();
        }

        let mut rng = SplitMix64::new(seed);
        let mut raw = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                raw[i * w + j] = means[j] + sds[j] * rng.next_normal();
            }
        }

        let mut smooth = vec![0.0; h * w];
        for i in 0..h {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(h - 1);
            for j in 0..w {
                let mut sum = 0.0;
                for r in lo..=hi {
                    sum += raw[r * w + j];
                }
                smooth[i * w + j] = sum / (hi - lo + 1) as f64;
            }
        }
        smooth
    }
}

impl Generator for Surrogate {
    fn generate(&self, req: &GenRequest) -> Result<GenResult> {
        req.validate()?;
        let image = if req.strength < IDENTITY_BYPASS_STRENGTH {
            req.image.clone()
        } else {
            let k = req.strength;
            let noise = Self::noise_field(&req.image, req.seed);
            let mixed = req
                .image
                .pixels()
                .iter()
                .zip(&noise)
                .map(|(&x, &e)| ((1.0 - k) * x + k * e).clamp(0.0, 1.0))
                .collect();
            GrayImage::new(req.image.height(), req.image.width(), mixed)?
        };
        Ok(GenResult {
            image,
            backend: Backend::Surrogate,
            request_echo: req.clone(),
        })
    }
}
