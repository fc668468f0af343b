//! JSON bodies of the diffusion service protocol.
//!
//! ```text
//! POST /generate       {image_png_base64, prompt, strength, guidance_scale, seed, request_id}
//!                   -> {image_png_base64, request_id}
//! POST /encode-latent  {image_png_base64} -> {latent, shape: [c, h, w]}
//! GET  /health         -> {status: "ready", model}
//! ```

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::codec::{image_from_png_bytes, png_bytes, GrayImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub image_png_base64: String,
    pub prompt: String,
    pub strength: f64,
    pub guidance_scale: f64,
    pub seed: u64,
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_inference_steps: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub image_png_base64: String,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeLatentRequest {
    pub image_png_base64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeLatentResponse {
    pub latent: Vec<f64>,
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

impl HealthResponse {
    pub fn is_ready(&self) -> bool {
        self.status == "ready"
    }
}

pub fn image_to_base64(image: &GrayImage) -> Result<String> {
    Ok(STANDARD.encode(png_bytes(image)?))
}

pub fn image_from_base64(s: &str) -> Result<GrayImage> {
    let bytes = STANDARD
        .decode(s)
        .map_err(|e| Error::MalformedResponse(format!("base64: {e}")))?;
    image_from_png_bytes(&bytes).map_err(|e| Error::MalformedResponse(e.to_string()))
}

impl EncodeLatentResponse {
    /// Check that `shape` agrees with the flat latent length.
    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.shape;
        if c * h * w != self.latent.len() {
            return Err(Error::MalformedResponse(format!(
                "latent length {} does not match shape {:?}",
                self.latent.len(),
                self.shape
            )));
        }
        if self.latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedResponse("non-finite latent value".into()));
        }
        Ok(())
    }
}
