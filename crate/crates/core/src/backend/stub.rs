//! A small in-process HTTP server speaking the generation protocol.
//!
//! It answers with a caller-supplied function and can be told to break the
//! protocol in specific ways, which makes it the reference peer for the
//! conformance harness and for client tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::{GenerationRequest, WireResponse, GENERATE_PATH};

pub type Responder = dyn Fn(&GenerationRequest) -> String + Send + Sync;

/// How the stub deviates from the protocol, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Conformant,
    /// Success bodies use `generated_text` instead of `text`.
    RenamedField,
    /// Success is reported as 201.
    WrongSuccessStatus,
    /// Malformed requests get 200 instead of 400.
    AcceptsMalformed,
    /// Every request gets 503.
    AlwaysLoading,
    /// The first `n` requests get 503, later ones are served normally.
    LoadingFor(usize),
    /// Waits before answering.
    Slow(Duration),
}

struct Shared {
    behavior: Behavior,
    responder: Box<Responder>,
    served: AtomicUsize,
    stop: AtomicBool,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept_thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(behavior: Behavior, responder: F) -> std::io::Result<Self>
    where
        F: Fn(&GenerationRequest) -> String + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            behavior,
            responder: Box::new(responder),
            served: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
        });
        let accept_shared = Arc::clone(&shared);
        let accept_thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shared.stop.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    let shared = Arc::clone(&accept_shared);
                    std::thread::spawn(move || {
                        let _ = handle(stream, &shared);
                    });
                }
            }
        });
        Ok(Self {
            addr,
            shared,
            accept_thread: Some(accept_thread),
        })
    }

    /// Serves requests by echoing the prompt back.
    pub fn echo(behavior: Behavior) -> std::io::Result<Self> {
        Self::start(behavior, |req| req.prompt.clone())
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received so far, valid or not.
    pub fn requests_served(&self) -> usize {
        self.shared.served.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        201 => "Created",
        400 => "Bad Request",
        404 => "Not Found",
        503 => "Service Unavailable",
        _ => "Unknown",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

fn error_body(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

fn handle(mut stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    if request_line.is_empty() {
        return Ok(());
    }
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header == "\r\n" || header == "\n" {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let nth = shared.served.fetch_add(1, Ordering::SeqCst);
    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    if method != "POST" || path != GENERATE_PATH {
        return write_response(&mut stream, 404, &error_body("not found"));
    }

    match shared.behavior {
        Behavior::AlwaysLoading => {
            return write_response(&mut stream, 503, &error_body("model loading"))
        }
        Behavior::LoadingFor(n) if nth < n => {
            return write_response(&mut stream, 503, &error_body("model loading"))
        }
        Behavior::Slow(delay) => std::thread::sleep(delay),
        _ => {}
    }

    let request = serde_json::from_slice::<GenerationRequest>(&body)
        .ok()
        .filter(|r| !r.prompt.is_empty() && r.max_new_tokens > 0);
    let Some(request) = request else {
        return if shared.behavior == Behavior::AcceptsMalformed {
            write_response(
                &mut stream,
                200,
                &serde_json::json!({"text": ""}).to_string(),
            )
        } else {
            write_response(&mut stream, 400, &error_body("malformed request"))
        };
    };

    let text = (shared.responder)(&request);
    match shared.behavior {
        Behavior::RenamedField => write_response(
            &mut stream,
            200,
            &serde_json::json!({ "generated_text": text }).to_string(),
        ),
        Behavior::WrongSuccessStatus => write_response(
            &mut stream,
            201,
            &serde_json::to_string(&WireResponse { text }).unwrap_or_default(),
        ),
        _ => write_response(
            &mut stream,
            200,
            &serde_json::to_string(&WireResponse { text }).unwrap_or_default(),
        ),
    }
}
