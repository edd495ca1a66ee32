use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;

use super::conformance;
use super::{
    BackendError, GenerationBackend, GenerationRequest, GenerationResponse, WireResponse,
    GENERATE_PATH,
};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Server root, e.g. `http://127.0.0.1:8080`.
    pub base_url: String,
    /// Per-attempt deadline covering connect, send and read.
    pub timeout: Duration,
    /// Retries after the first attempt, used for transport failures and 503.
    pub max_retries: u32,
    pub retry_backoff: Duration,
    /// Upper bound on concurrent requests from this client.
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            retry_backoff: Duration::from_millis(250),
            max_in_flight: 8,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    released: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.released.notify_one();
    }
}

/// Client for a `/v1/generate` model server. Decoding is greedy on the
/// server side, so identical requests yield identical text.
#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    client: Client,
    endpoint: String,
    id: String,
    slots: Slots,
}

enum Attempt {
    Done(Result<GenerationResponse, BackendError>),
    Retry(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        let endpoint = format!("{}{GENERATE_PATH}", config.base_url);
        Ok(Self {
            id: format!("http:{}", config.base_url),
            slots: Slots::new(config.max_in_flight),
            endpoint,
            client,
            config,
        })
    }

    /// Like [`new`](Self::new), but first runs the protocol conformance
    /// checks and refuses a server that fails any of them.
    pub fn connect_verified(config: HttpConfig) -> Result<Self, BackendError> {
        let report = conformance::check_server(&config.base_url, config.timeout);
        if !report.passed() {
            return Err(BackendError::NonConformant(report.failures().join("; ")));
        }
        Self::new(config)
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn attempt(&self, req: &GenerationRequest, attempt: u32) -> Attempt {
        let sent = self.client.post(&self.endpoint).json(req).send();
        let response = match sent {
            Ok(response) => response,
            Err(e) if e.is_timeout() => {
                return Attempt::Done(Err(BackendError::DeadlineExceeded(self.config.timeout)))
            }
            Err(e) => {
                return Attempt::Retry(BackendError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        };
        match response.status() {
            StatusCode::OK => Attempt::Done(self.decode(response)),
            StatusCode::BAD_REQUEST => Attempt::Done(Err(BackendError::Rejected {
                body: response.text().unwrap_or_default(),
            })),
            StatusCode::SERVICE_UNAVAILABLE => {
                Attempt::Retry(BackendError::ModelLoading { attempts: attempt })
            }
            status => Attempt::Done(Err(BackendError::UnexpectedStatus {
                status: status.as_u16(),
                body: response.text().unwrap_or_default(),
            })),
        }
    }

    fn decode(&self, response: Response) -> Result<GenerationResponse, BackendError> {
        let content_type = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_string();
        if !content_type.starts_with("application/json") {
            return Err(BackendError::Protocol(format!(
                "content type {content_type:?} is not application/json"
            )));
        }
        let body = response.bytes().map_err(|e| {
            if e.is_timeout() {
                BackendError::DeadlineExceeded(self.config.timeout)
            } else {
                BackendError::Transport {
                    attempts: 1,
                    message: e.to_string(),
                }
            }
        })?;
        let wire: WireResponse = serde_json::from_slice(&body)
            .map_err(|e| BackendError::Protocol(format!("expected {{\"text\": string}}: {e}")))?;
        Ok(GenerationResponse {
            text: wire.text,
            backend_id: self.id.clone(),
        })
    }
}

impl GenerationBackend for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let _slot = self.slots.acquire();
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(req, attempt) {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) => {
                    debug!(
                        "attempt {attempt}/{attempts} against {} failed: {err}",
                        self.id
                    );
                    last = Some(err);
                    if attempt < attempts {
                        std::thread::sleep(self.config.retry_backoff * attempt);
                    }
                }
            }
        }
        let err = last.expect("at least one attempt");
        warn!(
            "giving up on {} after {attempts} attempt(s): {err}",
            self.id
        );
        Err(err)
    }
}
