//! Candidate image generation at a given diffusion strength.
//!
//! Two backends share the [`Generator`] trait: the in-process
//! [`Surrogate`] and [`RemoteGenerator`], a client for the diffusion
//! service's HTTP protocol (see [`wire`]).

mod remote;
mod surrogate;
pub mod wire;

pub use remote::{RemoteGenerator, DEFAULT_MAX_IN_FLIGHT, DEFAULT_RETRIES};
pub use surrogate::{Surrogate, IDENTITY_BYPASS_STRENGTH};

use serde::{Deserialize, Serialize};

use crate::codec::GrayImage;
use crate::error::{Error, Result};

pub const MIN_STRENGTH: f64 = 0.001;
pub const MAX_STRENGTH: f64 = 1.0;
pub const DEFAULT_GUIDANCE_SCALE: f64 = 7.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub image: GrayImage,
    /// Passed through to the backend verbatim.
    pub prompt: String,
    pub strength: f64,
    pub guidance_scale: f64,
    pub seed: u64,
}

impl GenRequest {
    pub fn new(image: GrayImage, prompt: impl Into<String>, strength: f64, seed: u64) -> Self {
        Self {
            image,
            prompt: prompt.into(),
            strength,
            guidance_scale: DEFAULT_GUIDANCE_SCALE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_STRENGTH..=MAX_STRENGTH).contains(&self.strength) {
            return Err(Error::invalid(format!(
                "strength {} outside [{MIN_STRENGTH}, {MAX_STRENGTH}]",
                self.strength
            )));
        }
        if !(self.guidance_scale > 0.0) {
            return Err(Error::invalid("guidance_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Surrogate,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenResult {
    pub image: GrayImage,
    pub backend: Backend,
    pub request_echo: GenRequest,
}

pub trait Generator: Sync {
    fn generate(&self, req: &GenRequest) -> Result<GenResult>;

    /// Results come back in request order.
    fn generate_batch(&self, reqs: &[GenRequest]) -> Vec<Result<GenResult>> {
        reqs.iter().map(|r| self.generate(r)).collect()
    }
}

/// Inclusive arithmetic grid `start, start + step, ...` up to `stop`,
/// each value rounded to 1e-9.
pub fn strength_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && start <= stop && stop <= 1.0) {
        return Err(Error::invalid(format!(
            "strength grid needs 0 < start <= stop <= 1, got ({start}, {stop})"
        )));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("strength grid step must be positive"));
    }
    // The slack absorbs float drift in (stop - start) / step.
    let count = ((stop - start) / step + 1e-6).floor() as usize + 1;
    let grid: Vec<f64> = (0..count)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect();
    if grid.is_empty() {
        return Err(Error::invalid("empty strength grid"));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = strength_grid(0.001, 0.1, 0.001).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.001);
        assert_eq!(*g.last().unwrap(), 0.1);
        assert_eq!(g[56], 0.057);
        assert_eq!(strength_grid(0.01, 1.0, 0.01).unwrap().len(), 100);
        assert_eq!(strength_grid(0.5, 0.5, 0.1).unwrap(), vec![0.5]);
        assert!(strength_grid(0.01, 1.0, 0.001).unwrap().len() == 991);
    }

    #[test]
    fn grid_last_value_within_half_step() {
        for &(a, b, s) in &[(0.001, 0.1, 0.001), (0.01, 1.0, 0.03), (0.2, 0.9, 0.07)] {
            let g = strength_grid(a, b, s).unwrap();
            assert!(*g.last().unwrap() <= b + s / 2.0);
        }
    }

    #[test]
    fn grid_rejects_bad_ranges() {
        assert!(strength_grid(0.0, 0.1, 0.01).is_err());
        assert!(strength_grid(0.5, 0.4, 0.01).is_err());
        assert!(strength_grid(0.5, 1.2, 0.01).is_err());
        assert!(strength_grid(0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn request_validation() {
        let img = GrayImage::filled(2, 2, 0.5).unwrap();
        assert!(GenRequest::new(img.clone(), "", 0.001, 0)
            .validate()
            .is_ok());
        assert!(GenRequest::new(img.clone(), "", 0.0005, 0)
            .validate()
            .is_err());
        assert!(GenRequest::new(img.clone(), "", 1.01, 0)
            .validate()
            .is_err());
        let mut r = GenRequest::new(img, "", 0.5, 0);
        r.guidance_scale = 0.0;
        assert!(r.validate().is_err());
    }
}
