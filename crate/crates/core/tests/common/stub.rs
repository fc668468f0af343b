//! Minimal HTTP/1.1 stand-in for the diffusion service. It answers with the
//! surrogate recipe so results can be compared bit for bit.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use augmentor_core::generators::wire::{
    image_from_base64, image_to_base64, EncodeLatentRequest, EncodeLatentResponse, GenerateRequest,
    GenerateResponse, HealthResponse,
};
use augmentor_core::generators::{GenRequest, Generator, Surrogate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Normal,
    /// Health reports "loading".
    Loading,
    /// Close the first `n` connections without answering.
    DropFirst(usize),
    /// Sleep this long before answering /generate.
    Slow(Duration),
    WrongRequestId,
    /// Answer /generate with an image missing its last row.
    ShrinkImage,
    GarbageJson,
    /// Every request gets this status and a text body.
    Status(u16),
}

pub struct Stub {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
    stop: Arc<AtomicBool>,
    port: u16,
}

impl Stub {
    pub fn start(mode: Mode) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let seen = Arc::new(AtomicUsize::new(0));
        {
            let requests = requests.clone();
            let stop = stop.clone();
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let k = seen.fetch_add(1, Ordering::SeqCst);
                    if let Mode::DropFirst(n) = mode {
                        if k < n {
                            drop(conn);
                            continue;
                        }
                    }
                    let requests = requests.clone();
                    thread::spawn(move || {
                        let _ = serve(conn, mode, &requests);
                    });
                }
            });
        }
        Stub {
            url: format!("http://127.0.0.1:{port}"),
            requests,
            stop,
            port,
        }
    }

    pub fn paths(&self) -> Vec<String> {
        self.requests.lock().unwrap().iter().map(|(p, _)| p.clone()).collect()
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(("127.0.0.1", self.port));
    }
}

fn serve(conn: TcpStream, mode: Mode, log: &Mutex<Vec<(String, String)>>) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut length = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h)?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let body = String::from_utf8_lossy(&body).into_owned();
    log.lock().unwrap().push((path.clone(), body.clone()));

    let (status, text) = respond(&method, &path, &body, mode);
    let reason = if status == 200 { "OK" } else { "Error" };
    let mut w = conn;
    write!(
        w,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    w.flush()
}

fn respond(method: &str, path: &str, body: &str, mode: Mode) -> (u16, String) {
    if let Mode::Status(s) = mode {
        return (s, "service error".into());
    }
    if mode == Mode::GarbageJson {
        return (200, "{not json".into());
    }
    match (method, path) {
        ("GET", "/health") => {
            let status = if mode == Mode::Loading { "loading" } else { "ready" };
            let h = HealthResponse {
                status: status.into(),
                model: "stub".into(),
            };
            (200, serde_json::to_string(&h).unwrap())
        }
        ("POST", "/generate") => {
            if let Mode::Slow(d) = mode {
                thread::sleep(d);
            }
            let req: GenerateRequest = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return (422, format!("{{\"detail\":\"{e}\"}}")),
            };
            let image = image_from_base64(&req.image_png_base64).unwrap();
            let mut g = GenRequest::new(image, req.prompt, req.strength, req.seed);
            g.guidance_scale = req.guidance_scale;
            let mut out = Surrogate.generate(&g).unwrap().image;
            if mode == Mode::ShrinkImage {
                let (h, w) = (out.height(), out.width());
                out = augmentor_core::codec::GrayImage::new(h - 1, w, out.pixels()[..(h - 1) * w].to_vec()).unwrap();
            }
            let request_id = if mode == Mode::WrongRequestId {
                format!("{}-x", req.request_id)
            } else {
                req.request_id
            };
            let resp = GenerateResponse {
                image_png_base64: image_to_base64(&out).unwrap(),
                request_id,
            };
            (200, serde_json::to_string(&resp).unwrap())
        }
        ("POST", "/encode-latent") => {
            let req: EncodeLatentRequest = serde_json::from_str(body).unwrap();
            let image = image_from_base64(&req.image_png_base64).unwrap();
            let resp = EncodeLatentResponse {
                latent: image.pixels().to_vec(),
                shape: [1, image.height(), image.width()],
            };
            (200, serde_json::to_string(&resp).unwrap())
        }
        _ => (404, "not found".into()),
    }
}
