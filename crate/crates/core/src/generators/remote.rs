//! Blocking client for the diffusion service.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::wire::{
    image_from_base64, image_to_base64, EncodeLatentRequest, EncodeLatentResponse, GenerateRequest,
    GenerateResponse, HealthResponse,
};
use super::{Backend, GenRequest, GenResult, Generator};
use crate::codec::GrayImage;
use crate::error::{Error, Result};

pub const DEFAULT_RETRIES: usize = 3;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

pub struct RemoteGenerator {
    endpoint: String,
    agent: ureq::Agent,
    timeout: Duration,
    retries: usize,
    max_in_flight: usize,
    next_id: AtomicU64,
}

impl std::fmt::Debug for RemoteGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteGenerator")
            .field("endpoint", &self.endpoint)
            .field("timeout", &self.timeout)
            .field("retries", &self.retries)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

enum Failure {
    /// Connection-level problem; safe to retry.
    Transport(Error),
    Fatal(Error),
}

impl RemoteGenerator {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent,
            timeout,
            retries: DEFAULT_RETRIES,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            next_id: AtomicU64::new(0),
        }
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn classify(&self, e: ureq::Error) -> Failure {
        match e {
            ureq::Error::Timeout(_) => Failure::Transport(Error::Timeout(self.timeout)),
            ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => {
                Failure::Transport(Error::Timeout(self.timeout))
            }
            ureq::Error::Io(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound
            | ureq::Error::Protocol(_) => {
                Failure::Transport(Error::Unreachable(format!("{}: {e}", self.endpoint)))
            }
            other => Failure::Fatal(Error::MalformedResponse(other.to_string())),
        }
    }

    fn read_body(
        &self,
        mut resp: ureq::http::Response<ureq::Body>,
    ) -> std::result::Result<String, Failure> {
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_string()
            .map_err(|e| self.classify(e))?;
        if !(200..300).contains(&status) {
            return Err(Failure::Fatal(Error::MalformedResponse(format!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            ))));
        }
        Ok(body)
    }

    /// Run `attempt` with up to `retries` extra tries on transport failures.
    fn with_retry<T>(
        &self,
        mut attempt: impl FnMut() -> std::result::Result<T, Failure>,
    ) -> Result<T> {
        let mut last = None;
        for i in 0..=self.retries {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transport(e)) => {
                    log::debug!("transport failure on attempt {}: {e}", i + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn post<B: serde::Serialize, R: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R> {
        let url = format!("{}{path}", self.endpoint);
        let text = self.with_retry(|| {
            let resp = self
                .agent
                .post(&url)
                .send_json(body)
                .map_err(|e| self.classify(e))?;
            self.read_body(resp)
        })?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedResponse(format!("{path}: {e}")))
    }

    pub fn health(&self) -> Result<HealthResponse> {
        let url = format!("{}/health", self.endpoint);
        let text = self.with_retry(|| {
            let resp = self.agent.get(&url).call().map_err(|e| self.classify(e))?;
            self.read_body(resp)
        })?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedResponse(format!("/health: {e}")))
    }

    /// Health probe that fails unless the service reports `ready`.
    pub fn ensure_ready(&self) -> Result<HealthResponse> {
        let h = self.health()?;
        if !h.is_ready() {
            return Err(Error::NotReady(h.status));
        }
        Ok(h)
    }

    fn request_id(&self, req: &GenRequest) -> String {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        format!("{:016x}-{n}", req.seed)
    }

    pub fn encode_latent(&self, image: &GrayImage) -> Result<EncodeLatentResponse> {
        let body = EncodeLatentRequest {
            image_png_base64: image_to_base64(image)?,
        };
        let resp: EncodeLatentResponse = self.post("/encode-latent", &body)?;
        resp.validate()?;
        Ok(resp)
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, req: &GenRequest) -> Result<GenResult> {
        req.validate()?;
        let request_id = self.request_id(req);
        let body = GenerateRequest {
            image_png_base64: image_to_base64(&req.image)?,
            prompt: req.prompt.clone(),
            strength: req.strength,
            guidance_scale: req.guidance_scale,
            seed: req.seed,
            request_id: request_id.clone(),
            num_inference_steps: None,
        };
        let resp: GenerateResponse = self.post("/generate", &body)?;
        if resp.request_id != request_id {
            return Err(Error::MalformedResponse(format!(
                "request_id mismatch: sent {request_id}, got {}",
                resp.request_id
            )));
        }
        let image = image_from_base64(&resp.image_png_base64)?;
        if image.height() != req.image.height() || image.width() != req.image.width() {
            return Err(Error::mismatch(
                format!("{}x{}", req.image.height(), req.image.width()),
                format!("{}x{}", image.height(), image.width()),
            ));
        }
        Ok(GenResult {
            image,
            backend: Backend::Remote,
            request_echo: req.clone(),
        })
    }

    fn generate_batch(&self, reqs: &[GenRequest]) -> Vec<Result<GenResult>> {
        let slots: Vec<Mutex<Option<Result<GenResult>>>> =
            reqs.iter().map(|_| Mutex::new(None)).collect();
        let cursor = AtomicUsize::new(0);
        let workers = self.max_in_flight.min(reqs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::Relaxed);
                    if i >= reqs.len() {
                        break;
                    }
                    let out = self.generate(&reqs[i]);
                    *slots[i].lock().expect("slot poisoned") = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| {
                s.into_inner()
                    .expect("slot poisoned")
                    .expect("every slot filled")
            })
            .collect()
    }
}
