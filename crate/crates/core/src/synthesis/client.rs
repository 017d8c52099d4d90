//! Chat-completions HTTP client with rate limiting and exponential backoff.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Generator, GeneratorError, GeneratorReply, GeneratorRequest};

pub const API_KEY_ENV: &str = "COAUTHOR_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Per-client request rate; `None` disables limiting.
    pub requests_per_second: Option<f64>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: "http://localhost:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            timeout_secs: 60,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            requests_per_second: None,
        }
    }
}

/// Spaces requests at least `1 / rate` seconds apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        Self {
            interval: Duration::from_secs_f64(1.0 / requests_per_second),
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

pub fn backoff_delay(attempt: u32, initial_ms: u64, max_ms: u64) -> Duration {
    let ms = initial_ms.saturating_mul(1u64 << attempt.min(30));
    Duration::from_millis(ms.min(max_ms))
}

pub struct HttpGenerator {
    config: HttpConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    limiter: Option<RateLimiter>,
}

impl HttpGenerator {
    /// Reads the bearer token from `COAUTHOR_API_KEY`, if set.
    pub fn new(config: HttpConfig) -> Self {
        Self::with_api_key(config, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_api_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = config
            .requests_per_second
            .filter(|r| *r > 0.0)
            .map(RateLimiter::new);
        Self {
            config,
            agent,
            api_key,
            limiter,
        }
    }

    pub fn request_body(&self, req: &GeneratorRequest) -> Value {
        json!({
            "model": req.model_id,
            "messages": [{"role": "user", "content": format!("{}{}", req.prompt, req.prefix)}],
            "max_tokens": req.max_new_tokens,
            "temperature": req.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> Result<Value, (bool, String)> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let mut call = self.agent.post(&self.config.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err((false, format!("HTTP {status}")));
        }
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| (false, format!("invalid JSON reply: {e}")))
    }
}

/// Extracts the first choice's message content and finish reason.
pub fn parse_reply(v: &Value) -> Result<GeneratorReply, GeneratorError> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GeneratorError::BadReply("no choices in reply".into()))?;
    let completion = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GeneratorError::BadReply("choice has no message content".into()))?;
    Ok(GeneratorReply {
        completion: completion.to_string(),
        finish_reason: choice
            .get("finish_reason")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string(),
    })
}

impl Generator for HttpGenerator {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorReply, GeneratorError> {
        let body = self.request_body(req);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let d = backoff_delay(
                    attempt - 1,
                    self.config.initial_backoff_ms,
                    self.config.max_backoff_ms,
                );
                debug!("retrying {} in {:?}", self.config.url, d);
                thread::sleep(d);
            }
            match self.attempt(&body) {
                Ok(v) => return parse_reply(&v),
                Err((retryable, msg)) => {
                    warn!("{}: {msg}", self.config.url);
                    last = msg;
                    if !retryable {
                        break;
                    }
                }
            }
        }
        Err(GeneratorError::Unavailable(last))
    }
}
