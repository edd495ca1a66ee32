//! Text-generation backends.
//!
//! | backend | use |
//! |---------|-----|
//! | [`OracleBackend`] | answers every prompt of a known corpus with its gold target |
//! | [`HttpBackend`] | client for a model server speaking the `/v1/generate` protocol |
//! | [`stub::StubServer`] | minimal in-process server implementing that protocol |
//!
//! The wire protocol is `POST /v1/generate` with body
//! `{"prompt": string, "max_new_tokens": integer}` and response
//! `{"text": string}`. Status 200 on success, 400 on a malformed request,
//! 503 while the model is loading.

pub mod conformance;
mod http;
mod oracle;
pub mod stub;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use oracle::{OracleBackend, OracleError};

/// Default generation budget, equal to the maximum sequence length used in training.
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 128;

pub const GENERATE_PATH: &str = "/v1/generate";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("prompt does not belong to the oracle corpus: {0:?}")]
    NotInCorpus(String),
    #[error("no response within {0:?}")]
    DeadlineExceeded(Duration),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server rejected the request (400): {body}")]
    Rejected { body: String },
    #[error("model still loading after {attempts} attempt(s) (503)")]
    ModelLoading { attempts: u32 },
    #[error("unexpected status {status}: {body}")]
    UnexpectedStatus { status: u16, body: String },
    #[error("response violates the generation protocol: {0}")]
    Protocol(String),
    #[error("server failed the conformance check: {0}")]
    NonConformant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_new_tokens: u32) -> Result<Self, BackendError> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_new_tokens must be positive".into(),
            ));
        }
        Ok(Self {
            prompt,
            max_new_tokens,
        })
    }

    pub fn with_default_budget(prompt: impl Into<String>) -> Result<Self, BackendError> {
        Self::new(prompt, DEFAULT_MAX_NEW_TOKENS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResponse {
    pub text: String,
    pub backend_id: String,
}

/// Body of a successful protocol response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireResponse {
    pub text: String,
}

/// Anything that turns a prompt into text. Implementations must be callable
/// from many threads at once.
pub trait GenerationBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for &B {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).generate(req)
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).generate(req)
    }
}
