//! Completion endpoints that sample action sequences from a prompt.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Response(String),
    #[error("completion failed after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        last: Box<ClientError>,
    },
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Returns exactly `n` completions of `prompt` (possibly empty strings).
pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str, n: usize) -> Result<Vec<String>, ClientError>;
}

/// Answers every prompt with the target of its first example, `n` times.
/// Deterministic and offline, for hermetic pipeline runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoStubClient;

impl CompletionClient for EchoStubClient {
    fn complete(&self, prompt: &str, n: usize) -> Result<Vec<String>, ClientError> {
        let echoed = prompt
            .split_once("Example#1:\n")
            .and_then(|(_, rest)| rest.lines().find_map(|l| l.strip_prefix("Actions: ")))
            .unwrap_or("")
            .to_string();
        Ok(vec![echoed; n])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpClientConfig {
    pub url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for HttpClientConfig {
    fn default() -> Self {
        HttpClientConfig {
            url: String::new(),
            model: String::new(),
            api_key: None,
            temperature: 1.0,
            seed: None,
            max_attempts: 3,
            initial_backoff_ms: 500,
            max_in_flight: 4,
            timeout_secs: 120,
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    n: usize,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    message: Option<ChoiceMessage>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Counting semaphore bounding concurrent requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Chat-completion style JSON endpoint.
pub struct HttpCompletionClient {
    config: HttpClientConfig,
    http: reqwest::blocking::Client,
    permits: Permits,
}

impl HttpCompletionClient {
    pub fn new(config: HttpClientConfig) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let permits = Permits {
            free: Mutex::new(config.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        Ok(HttpCompletionClient {
            config,
            http,
            permits,
        })
    }

    fn attempt(&self, prompt: &str, n: usize) -> Result<Vec<String>, ClientError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            n,
            temperature: self.config.temperature,
            seed: self.config.seed,
        };
        let _permit = self.permits.acquire();
        let mut req = self.http.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| ClientError::Response(e.to_string()))?;
        if parsed.choices.len() != n {
            return Err(ClientError::Response(format!(
                "expected {n} choices, got {}",
                parsed.choices.len()
            )));
        }
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| {
                c.message
                    .and_then(|m| m.content)
                    .or(c.text)
                    .unwrap_or_default()
            })
            .collect())
    }
}

impl CompletionClient for HttpCompletionClient {
    /// Retries transport failures, 429 and 5xx responses with exponential
    /// backoff, up to `max_attempts` attempts in total.
    fn complete(&self, prompt: &str, n: usize) -> Result<Vec<String>, ClientError> {
        let attempts = self.config.max_attempts.max(1);
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempt = 1;
        loop {
            match self.attempt(prompt, n) {
                Ok(out) => return Ok(out),
                Err(e) if e.retryable() && attempt < attempts => {
                    log::warn!("completion attempt {attempt}/{attempts} failed: {e}");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) if e.retryable() => {
                    return Err(ClientError::Exhausted {
                        attempts,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}
