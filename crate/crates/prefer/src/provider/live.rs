//! Live HTTP chat-completion client.
//!
//! Bounded retries with exponential backoff for transport failures, an
//! in-flight concurrency cap, and the shared call counter (successful
//! completions only).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::json;

use crate::error::{Error, Result};

use super::{Completion, CompletionRequest, Provider, API_KEY_ENV};

const MAX_ATTEMPTS: u32 = 3;
const BACKOFF_BASE: Duration = Duration::from_secs(1);

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
    }

    fn release(&self) {
        *self.permits.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

pub struct LiveProvider {
    base_url: String,
    model: String,
    api_key: String,
    client: reqwest::blocking::Client,
    semaphore: Semaphore,
    count: AtomicU64,
}

impl LiveProvider {
    pub fn new(base_url: &str, model: &str, api_key: &str, max_concurrency: usize) -> Result<Self> {
        if api_key.trim().is_empty() {
            return Err(Error::Config(format!(
                "no API key; set the {API_KEY_ENV} environment variable"
            )));
        }
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?,
            semaphore: Semaphore::new(max_concurrency.max(1)),
            count: AtomicU64::new(0),
        })
    }

    /// API key from the environment; errors before any network activity if
    /// it is missing or empty.
    pub fn from_env(base_url: &str, model: &str, max_concurrency: usize) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV).unwrap_or_default();
        Self::new(base_url, model, &key, max_concurrency)
    }

    fn post_once(&self, request: &CompletionRequest) -> std::result::Result<String, String> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| e.to_string())?;
        let status = response.status();
        let text = response.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {text:.200}"));
        }
        Ok(text)
    }
}

impl Provider for LiveProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        request.validate()?;
        self.semaphore.acquire();
        let result = (|| {
            let mut last_err = String::new();
            for attempt in 0..MAX_ATTEMPTS {
                if attempt > 0 {
                    std::thread::sleep(BACKOFF_BASE * 2u32.pow(attempt - 1));
                }
                match self.post_once(request) {
                    Ok(payload) => {
                        let value: serde_json::Value =
                            serde_json::from_str(&payload).map_err(|e| Error::MalformedResponse {
                                message: e.to_string(),
                                payload: payload.clone(),
                            })?;
                        let text = value["choices"][0]["message"]["content"]
                            .as_str()
                            .ok_or_else(|| Error::MalformedResponse {
                                message: "missing choices[0].message.content".into(),
                                payload: payload.clone(),
                            })?
                            .to_string();
                        let usage_tokens =
                            value["usage"]["total_tokens"].as_u64().unwrap_or(0) as u32;
                        self.count.fetch_add(1, Ordering::SeqCst);
                        return Ok(Completion { text, usage_tokens });
                    }
                    Err(message) => last_err = message,
                }
            }
            Err(Error::Transport {
                attempts: MAX_ATTEMPTS,
                message: last_err,
            })
        })();
        self.semaphore.release();
        result
    }

    fn call_count(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }

    fn reset_count(&self) {
        self.count.store(0, Ordering::SeqCst);
    }
}
