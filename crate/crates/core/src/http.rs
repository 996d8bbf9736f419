//! Minimal blocking HTTP plumbing shared by the LLM backend and the listing
//! fetcher. The [`HttpTransport`] trait lets tests script responses.

use std::time::Duration;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<Vec<u8>>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest { method: Method::Get, url: url.into(), headers: Vec::new(), body: None }
    }

    pub fn post_json(url: impl Into<String>, body: &serde_json::Value) -> Self {
        HttpRequest {
            method: Method::Post,
            url: url.into(),
            headers: vec![("content-type".into(), "application/json".into())],
            body: Some(body.to_string().into_bytes()),
        }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_string(), value.into()));
        self
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

/// Connection-level failure (no HTTP status available).
#[derive(Debug, Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

pub trait HttpTransport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// [`HttpTransport`] over a blocking `reqwest` client.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration, user_agent: &str) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(user_agent)
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut builder = match request.method {
            Method::Get => self.client.get(&request.url),
            Method::Post => self.client.post(&request.url),
        };
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        if let Some(body) = &request.body {
            builder = builder.body(body.clone());
        }
        let response = builder.send().map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.bytes().map_err(|e| TransportError(e.to_string()))?.to_vec();
        Ok(HttpResponse { status, body })
    }
}

/// How a status code should be treated by a retrying caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusClass {
    Success,
    /// 408, 429 and 5xx.
    Transient,
    /// 401 and 403.
    Auth,
    Permanent,
}

pub fn classify_status(status: u16) -> StatusClass {
    match status {
        200..=299 => StatusClass::Success,
        408 | 429 | 500..=599 => StatusClass::Transient,
        401 | 403 => StatusClass::Auth,
        _ => StatusClass::Permanent,
    }
}

/// Exponential backoff: `base * factor^attempt`, jittered by ±`jitter`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub jitter: f64,
    /// Maximum number of retries after the first attempt.
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { base: Duration::from_secs(1), factor: 2.0, jitter: 0.2, max_retries: 5 }
    }
}

impl RetryPolicy {
    /// Policy that never sleeps; for tests and replay.
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy { base: Duration::ZERO, max_retries, ..RetryPolicy::default() }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        if self.base.is_zero() {
            return Duration::ZERO;
        }
        let nominal = self.base.as_secs_f64() * self.factor.powi(retry as i32);
        let spread = if self.jitter > 0.0 {
            rand::thread_rng().gen_range(-self.jitter..=self.jitter)
        } else {
            0.0
        };
        Duration::from_secs_f64((nominal * (1.0 + spread)).max(0.0))
    }
}

#[derive(Debug, Error)]
pub enum RequestError {
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("request failed permanently (HTTP {status}): {body}")]
    Permanent { status: u16, body: String },
    #[error("transient failure after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

impl RequestError {
    pub fn is_transient(&self) -> bool {
        matches!(self, RequestError::Exhausted { .. })
    }
}

/// Successful response plus the number of attempts it took.
#[derive(Debug)]
pub struct Delivered {
    pub response: HttpResponse,
    pub attempts: u32,
}

/// Sends `request`, retrying transient failures per `policy`.
pub fn send_with_retry(
    transport: &dyn HttpTransport,
    request: &HttpRequest,
    policy: &RetryPolicy,
) -> Result<Delivered, RequestError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let last = match transport.send(request) {
            Ok(response) => match classify_status(response.status) {
                StatusClass::Success => return Ok(Delivered { response, attempts }),
                StatusClass::Auth => {
                    return Err(RequestError::Auth { status: response.status, body: response.text() })
                }
                StatusClass::Permanent => {
                    return Err(RequestError::Permanent { status: response.status, body: response.text() })
                }
                StatusClass::Transient => format!("HTTP {}", response.status),
            },
            Err(e) => e.0,
        };
        if attempts > policy.max_retries {
            return Err(RequestError::Exhausted { attempts, last });
        }
        let wait = policy.delay(attempts - 1);
        log::debug!("{} {} failed ({last}); retry {attempts} in {wait:?}", method_name(request.method), request.url);
        std::thread::sleep(wait);
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Get => "GET",
        Method::Post => "POST",
    }
}
