//! Black-box checks that a server speaks the generation protocol.
//!
//! The harness knows nothing about the model behind the server. It checks
//! status codes, content type, the exact response field set and that
//! repeated identical requests are answered identically.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;

use super::{WireResponse, GENERATE_PATH};

const PROBE_PROMPT: &str = "transfer sentence to intents : show me flights";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConformanceReport {
    pub checks: Vec<Check>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }
}

struct Probe {
    status: StatusCode,
    content_type: String,
    body: String,
}

fn send(client: &Client, url: &str, body: &str) -> Result<Probe, String> {
    let response = client
        .post(url)
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(body.to_string())
        .send()
        .map_err(|e| e.to_string())?;
    let status = response.status();
    let content_type = response
        .headers()
        .get(reqwest::header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_string();
    let body = response.text().map_err(|e| e.to_string())?;
    Ok(Probe {
        status,
        content_type,
        body,
    })
}

fn check_success(probe: &Probe) -> Result<String, String> {
    if probe.status != StatusCode::OK {
        return Err(format!("status {} (expected 200)", probe.status.as_u16()));
    }
    if !probe.content_type.starts_with("application/json") {
        return Err(format!("content type {:?}", probe.content_type));
    }
    serde_json::from_str::<WireResponse>(&probe.body)
        .map(|w| w.text)
        .map_err(|e| format!("body {:?} is not {{\"text\": string}}: {e}", probe.body))
}

fn expect_bad_request(probe: Result<Probe, String>) -> (bool, String) {
    match probe {
        Ok(p) if p.status == StatusCode::BAD_REQUEST => (true, "400".into()),
        Ok(p) => (
            false,
            format!("status {} (expected 400)", p.status.as_u16()),
        ),
        Err(e) => (false, e),
    }
}

/// Runs every protocol check against `base_url`.
pub fn check_server(base_url: &str, timeout: Duration) -> ConformanceReport {
    let url = format!("{}{GENERATE_PATH}", base_url.trim_end_matches('/'));
    let client = match Client::builder().timeout(timeout).build() {
        Ok(client) => client,
        Err(e) => {
            return ConformanceReport {
                checks: vec![Check {
                    name: "client",
                    passed: false,
                    detail: e.to_string(),
                }],
            }
        }
    };
    let valid = serde_json::json!({"prompt": PROBE_PROMPT, "max_new_tokens": 16}).to_string();
    let mut checks = Vec::new();

    let first = send(&client, &url, &valid).and_then(|p| check_success(&p));
    checks.push(Check {
        name: "valid request",
        passed: first.is_ok(),
        detail: match &first {
            Ok(text) => format!("200 with text {text:?}"),
            Err(e) => e.clone(),
        },
    });

    let second = send(&client, &url, &valid).and_then(|p| check_success(&p));
    let (passed, detail) = match (&first, &second) {
        (Ok(a), Ok(b)) if a == b => (true, "identical text".to_string()),
        (Ok(a), Ok(b)) => (false, format!("{a:?} then {b:?}")),
        (_, Err(e)) | (Err(e), _) => (false, e.clone()),
    };
    checks.push(Check {
        name: "deterministic",
        passed,
        detail,
    });

    for (name, body) in [
        ("non-json body", "this is not json".to_string()),
        (
            "missing field",
            serde_json::json!({"prompt": PROBE_PROMPT}).to_string(),
        ),
        (
            "wrong field type",
            serde_json::json!({"prompt": PROBE_PROMPT, "max_new_tokens": "many"}).to_string(),
        ),
    ] {
        let (passed, detail) = expect_bad_request(send(&client, &url, &body));
        checks.push(Check {
            name,
            passed,
            detail,
        });
    }

    ConformanceReport { checks }
}
