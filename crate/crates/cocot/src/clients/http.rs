//! Chat-style HTTP inference client with bounded concurrency and
//! exponential-backoff retries.
//!
//! Wire contract: `POST {endpoint}/completions` with body
//! `{"messages":[{"role":"user","parts":[{"text":...},{"image_ref":...}]}],"temperature":0.0}`
//! and response `{"text": "..."}`. Requests are idempotent reads, so
//! retrying after a transient failure never duplicates side effects.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::{ClientConfig, ModelClient, ModelRequest};

/// Fair FIFO admission gate: callers are served in arrival (ticket) order
/// and at most `cap` hold a permit at once.
struct Gate {
    cap: usize,
    state: Mutex<GateState>,
    cv: Condvar,
}

#[derive(Default)]
struct GateState {
    next_ticket: u64,
    next_to_admit: u64,
    in_flight: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(cap: usize) -> Gate {
        Gate { cap, state: Mutex::new(GateState::default()), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut s = self.state.lock().unwrap();
        let ticket = s.next_ticket;
        s.next_ticket += 1;
        while !(s.next_to_admit == ticket && s.in_flight < self.cap) {
            s = self.cv.wait(s).unwrap();
        }
        s.next_to_admit += 1;
        s.in_flight += 1;
        drop(s);
        self.cv.notify_all();
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.0.state.lock().unwrap();
        s.in_flight -= 1;
        drop(s);
        self.0.cv.notify_all();
    }
}

pub struct HttpModelClient {
    config: ClientConfig,
    http: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpModelClient {
    pub fn new(config: ClientConfig) -> Result<HttpModelClient> {
        config.validate()?;
        if config.endpoint.is_empty() {
            return Err(Error::Config {
                key: "client.endpoint".into(),
                message: "endpoint required for HTTP mode".into(),
            });
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Client(format!("building http client: {e}")))?;
        let gate = Gate::new(config.max_concurrent);
        Ok(HttpModelClient { config, http, gate })
    }

    fn url(&self) -> String {
        format!("{}/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn payload(req: &ModelRequest) -> Value {
        let mut parts = vec![json!({ "text": req.prompt })];
        for r in &req.image_refs {
            parts.push(json!({ "image_ref": r }));
        }
        json!({
            "messages": [{ "role": "user", "parts": parts }],
            "temperature": req.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, (bool, String)> {
        let mut builder = self.http.post(self.url()).json(body);
        if let Some(token) = &self.config.auth_token {
            builder = builder.bearer_auth(token);
        }
        let resp = builder
            .send()
            .map_err(|e| (true, format!("transport: {e}")))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err((true, format!("status {status}")));
        }
        if !status.is_success() {
            return Err((false, format!("status {status}")));
        }
        let value: Value = resp
            .json()
            .map_err(|e| (false, format!("malformed response body: {e}")))?;
        value
            .get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or((false, "response missing `text` field".to_string()))
    }
}

impl ModelClient for HttpModelClient {
    fn complete(&self, req: &ModelRequest) -> Result<String> {
        // One permit covers the request and all its retries, so in-flight
        // HTTP calls never exceed max_concurrent.
        let _permit = self.gate.acquire();
        let body = Self::payload(req);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            match self.attempt(&body) {
                Ok(mut text) => {
                    if text.chars().count() > req.max_output_chars {
                        text = text.chars().take(req.max_output_chars).collect();
                    }
                    return Ok(text);
                }
                Err((retryable, message)) => {
                    last = message;
                    if !retryable || attempt == self.config.max_retries {
                        break;
                    }
                    let delay = self.config.retry_backoff_ms.saturating_mul(1 << attempt.min(10));
                    log::warn!("request failed ({last}); retrying in {delay}ms");
                    std::thread::sleep(Duration::from_millis(delay));
                }
            }
        }
        Err(Error::Client(format!(
            "request failed after {} attempts: {last}",
            self.config.max_retries + 1
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn gate_never_admits_more_than_cap() {
        let gate = Arc::new(Gate::new(3));
        let inflight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..24 {
            let gate = gate.clone();
            let inflight = inflight.clone();
            let peak = peak.clone();
            handles.push(std::thread::spawn(move || {
                let _p = gate.acquire();
                let now = inflight.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                inflight.fetch_sub(1, Ordering::SeqCst);
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn payload_shape() {
        let req = ModelRequest::new("hello")
            .unwrap()
            .with_images(vec!["a.png".to_string()]);
        let v = HttpModelClient::payload(&req);
        assert_eq!(v["messages"][0]["role"], "user");
        assert_eq!(v["messages"][0]["parts"][0]["text"], "hello");
        assert_eq!(v["messages"][0]["parts"][1]["image_ref"], "a.png");
        assert_eq!(v["temperature"], 0.0);
    }
}
